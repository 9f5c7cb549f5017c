#include "pd/train.hpp"

#include <cmath>
#include <filesystem>

namespace pd {

namespace {

// splitmix64-style stream mixing so train/holdout draws never collide
std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t kTrainStream = 0x747261696e;
constexpr std::uint64_t kHoldoutStream = 0x686f6c64;

template <typename T>
StereoSample<T> generate(const TrainConfig& cfg, std::uint64_t seed) {
  const DisparitySpec spec = DisparitySpec::two_plane(cfg.bg_d, cfg.fg_d);
  if (cfg.use_textured)
    return gen_textured_scene<T>(cfg.width, cfg.height, TextureSpec{}, spec, seed);
  return gen_random_dot_stereogram<T>(cfg.width, cfg.height, spec, cfg.density, seed,
                                      cfg.dot_size);
}

// stack [1,3,H,W] views into one [B,3,H,W] pair of batch tensors
template <typename T>
void assemble_batch(const std::vector<StereoSample<T>>& samples, Tensor<T>& left,
                    Tensor<T>& right) {
  const Shape s = samples[0].left.shape;
  const std::int64_t plane = std::int64_t(s.c) * s.h * s.w;
  left = Tensor<T>::zeros({int(samples.size()), s.c, s.h, s.w});
  right = Tensor<T>::zeros({int(samples.size()), s.c, s.h, s.w});
  for (std::size_t b = 0; b < samples.size(); ++b) {
    std::copy_n(samples[b].left.data->data(), plane, left.data->data() + b * plane);
    std::copy_n(samples[b].right.data->data(), plane, right.data->data() + b * plane);
  }
}

bool finite(double v) { return std::isfinite(v); }

template <typename T>
ParamStore<T> deep_copy(const ParamStore<T>& src) {
  ParamStore<T> dst;
  dst.step = src.step;
  for (const auto& e : src.entries) {
    Tensor<T>& v = dst.add(e.name, e.value.shape);
    *v.data = *e.value.data;
    dst.entries.back().m = e.m;
    dst.entries.back().v = e.v;
  }
  return dst;
}

void save_pair(const std::string& dir, const std::string& tag,
               const ParamStore<float>& depth, const ParamStore<float>& conf,
               const TrainConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto dmap = to_config_map(cfg.depth_cfg);
  dmap["kind"] = "depth";
  save_checkpoint((fs::path(dir) / ("depth_" + tag + ".ckpt")).string(), depth, dmap);
  auto cmap = to_config_map(cfg.conf_cfg);
  cmap["kind"] = "confidence";
  save_checkpoint((fs::path(dir) / ("conf_" + tag + ".ckpt")).string(), conf, cmap);
}

}  // namespace

void TrainConfig::validate() const {
  depth_cfg.validate();
  conf_cfg.validate();
  weights.validate();
  aug.validate();
  if (batch < 1) throw ConfigError("TrainConfig: batch must be positive");
  if (total_steps < 1) throw ConfigError("TrainConfig: total_steps must be positive");
  if (checkpoint_every < 1)
    throw ConfigError("TrainConfig: checkpoint_every must be positive");
  if (confidence_warmup < 0)
    throw ConfigError("TrainConfig: confidence_warmup must be nonnegative");
  if (!(lr > 0)) throw ConfigError("TrainConfig: lr must be positive");
  if (dot_size < 1) throw ConfigError("TrainConfig: dot_size must be >= 1");
  const int div = 1 << std::max(depth_cfg.encoder_depth, conf_cfg.stages);
  if (width % div != 0 || height % div != 0)
    throw ConfigError("TrainConfig: " + std::to_string(width) + "x" +
                      std::to_string(height) + " not divisible by 2^" +
                      std::to_string(std::max(depth_cfg.encoder_depth, conf_cfg.stages)));
}

template <typename T>
StereoSample<T> make_train_sample(const TrainConfig& cfg, std::int64_t step, int index) {
  const std::uint64_t seed =
      mix(mix(cfg.seed, kTrainStream), std::uint64_t(step) * 64 + std::uint64_t(index));
  StereoSample<T> s = generate<T>(cfg, seed);
  if (cfg.augment_enabled) s = augment(s, cfg.aug, mix(seed, 0x617567));
  return s;
}

TrainResult train(const TrainConfig& cfg,
                  const std::function<void(const StepStats&)>& on_step,
                  const std::string& checkpoint_dir) {
  cfg.validate();
  TrainResult result;
  result.depth_params = init_depthnet<float>(cfg.depth_cfg, mix(cfg.seed, 0x64657074));
  result.conf_params =
      init_confidencenet<float>(cfg.conf_cfg, mix(cfg.seed, 0x636f6e66));
  ParamStore<float>& depth = result.depth_params;
  ParamStore<float>& conf = result.conf_params;

  for (std::int64_t step = 0; step < cfg.total_steps; ++step) {
    std::vector<StereoSample<float>> samples;
    samples.reserve(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b)
      samples.push_back(make_train_sample<float>(cfg, step, b));
    Tensorf left, right;
    assemble_batch(samples, left, right);

    StepStats stats;
    stats.step = step;
    stats.lr = scheduled_lr(cfg.lr, step, cfg.total_steps);

    Tensorf pm_map;
    {
      Tapef tape;
      depth.watch_all(tape);
      DisparityPyramid<float> pyr = depthnet_forward(left, depth, cfg.depth_cfg);
      LossBreakdown<float> loss =
          total_loss(left, right, pyr, cfg.weights, cfg.patch_sizes, cfg.mode);
      stats.l_pm = loss.l_pm.item();
      stats.l_vr = loss.l_vr.item();
      stats.l_ds = loss.l_ds.item();
      stats.l_dc = loss.l_dc.item();
      stats.l_total = loss.l_total.item();
      pm_map = loss.pm_map.detach();
      if (!finite(stats.l_total) || !finite(stats.l_pm) || !finite(stats.l_vr) ||
          !finite(stats.l_ds) || !finite(stats.l_dc)) {
        depth.unwatch_all();
        result.aborted = true;
        result.abort_step = step;
        break;
      }
      tape.backward(loss.l_total);
      AdamConfig acfg;
      acfg.lr = stats.lr;
      adam_step(depth, acfg);
      depth.unwatch_all();
    }

    if (step >= cfg.confidence_warmup) {
      ConfidenceMap<float> target = confidence_target(pm_map);
      Tapef tape;
      conf.watch_all(tape);
      ConfidenceMap<float> predicted = confidencenet_forward(left, conf, cfg.conf_cfg);
      Tensorf closs = confidence_loss(target, predicted);
      stats.l_conf = closs.item();
      if (!finite(stats.l_conf)) {
        conf.unwatch_all();
        result.aborted = true;
        result.abort_step = step;
        break;
      }
      tape.backward(closs);
      AdamConfig acfg;
      acfg.lr = stats.lr;
      adam_step(conf, acfg);
      conf.unwatch_all();
    }

    result.log.push_back(stats);
    if (on_step) on_step(stats);
    if (!checkpoint_dir.empty() && (step + 1) % cfg.checkpoint_every == 0)
      save_pair(checkpoint_dir, "step_" + std::to_string(step + 1), depth, conf, cfg);
  }

  if (!checkpoint_dir.empty()) {
    // on a NaN abort the stores still hold the last finite-loss update
    save_pair(checkpoint_dir, result.aborted ? "last_good" : "final", depth, conf, cfg);
  }
  return result;
}

template <typename T>
DisparityMap<T> infer_disparity(const Tensor<T>& left, ParamStore<T>& params,
                                const DepthNetConfig& cfg) {
  return depthnet_forward(left, params, cfg).left[3];
}

HoldoutSummary evaluate_holdout(const TrainConfig& cfg, ParamStore<float>& depth,
                                ParamStore<float>* conf, int n_scenes,
                                std::uint64_t seed) {
  if (n_scenes < 1) throw ConfigError("evaluate_holdout: need at least one scene");
  HoldoutSummary out;
  out.scenes = n_scenes;
  double mae_sum = 0;
  std::int64_t n_valid = 0, outliers = 0;
  std::vector<double> conf_values, rel_errors;

  for (int i = 0; i < n_scenes; ++i) {
    StereoSample<float> s =
        generate<float>(cfg, mix(mix(seed, kHoldoutStream), std::uint64_t(i)));
    DisparityMap<float> pred = infer_disparity(s.left, depth, cfg.depth_cfg);
    ConfidenceMap<float> cm;
    if (conf) cm = confidencenet_forward(s.left, *conf, cfg.conf_cfg);

    const float* p = pred.values.data->data();
    const float* g = s.gt.values.data->data();
    const float* m = s.gt_mask.data->data();
    for (std::int64_t k = 0; k < s.gt.values.numel(); ++k) {
      if (m[k] <= 0.5f) continue;
      const double err = std::abs(double(p[k]) - double(g[k]));
      mae_sum += err;
      ++n_valid;
      if (err > 3.0 && err > 0.05 * double(g[k])) ++outliers;
      if (conf) {
        conf_values.push_back(double((*cm.values.data)[k]));
        rel_errors.push_back(err / double(g[k]));
      }
    }
  }
  if (n_valid == 0) throw NumericError("evaluate_holdout: no valid pixels");
  out.mae = mae_sum / double(n_valid);
  out.d1 = double(outliers) / double(n_valid);

  if (conf && !conf_values.empty()) {
    const int n = int(conf_values.size());
    Tensord cv = Tensord::zeros({1, 1, 1, n}), pv = Tensord::zeros({1, 1, 1, n});
    Tensord gv = Tensord::full({1, 1, 1, n}, 1.0), mk = Tensord::full({1, 1, 1, n}, 1.0);
    for (int k = 0; k < n; ++k) {
      (*cv.data)[k] = conf_values[k];
      (*pv.data)[k] = 1.0 + rel_errors[k];  // abs_rel vs gt=1 reproduces rel_errors
    }
    CalibrationReport report =
        confidence_calibration(ConfidenceMap<double>{cv}, pv, gv, mk, 10);
    out.spearman = report.spearman;
    out.low_decile_abs_rel = report.bin_mean_abs_rel.front();
    out.high_decile_abs_rel = report.bin_mean_abs_rel.back();
  }
  return out;
}

template StereoSample<float> make_train_sample<float>(const TrainConfig&, std::int64_t,
                                                      int);
template StereoSample<double> make_train_sample<double>(const TrainConfig&, std::int64_t,
                                                        int);
template DisparityMap<float> infer_disparity<float>(const Tensor<float>&,
                                                    ParamStore<float>&,
                                                    const DepthNetConfig&);
template DisparityMap<double> infer_disparity<double>(const Tensor<double>&,
                                                      ParamStore<double>&,
                                                      const DepthNetConfig&);

}  // namespace pd
