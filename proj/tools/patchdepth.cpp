#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pd/data.hpp"
#include "pd/gradcheck.hpp"
#include "pd/landscape.hpp"
#include "pd/train.hpp"

namespace fs = std::filesystem;
using namespace pd;

namespace {

// ---------------------------------------------------------------- plumbing

std::string resolve_out(std::string out, const std::string& command) {
  if (!out.empty()) return out;
  const char* root = std::getenv("PATCHDEPTH_OUT_ROOT");
  if (root && *root) return (fs::path(root) / command).string();
  throw ConfigError("no --out given and PATCHDEPTH_OUT_ROOT is unset");
}

void claim_out_dir(const std::string& dir, bool force) {
  if (fs::exists(dir) && !force)
    throw ConfigError("output directory '" + dir +
                      "' already exists; pass --force to reuse it");
  fs::create_directories(dir);
}

void echo_config(const std::string& dir,
                 const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream os(fs::path(dir) / "config.txt");
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// ------------------------------------------------------------- colormaps

// display-only ramps; none of this feeds back into any metric
Tensorf colormap_red_yellow(const Tensorf& values) {
  const Shape s = values.shape;
  Tensorf img = Tensorf::zeros({s.n, 3, s.h, s.w});
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const float t = std::clamp(values.at(0, 0, y, x), 0.0f, 1.0f);
      img.at(0, 0, y, x) = 1.0f;  // 0 -> pure red, 1 -> pure yellow
      img.at(0, 1, y, x) = t;
      img.at(0, 2, y, x) = 0.0f;
    }
  return img;
}

Tensorf colormap_perceptual(const Tensorf& values) {
  // five-stop viridis-style ramp, linearly interpolated
  static const float stops[5][3] = {{0.267f, 0.005f, 0.329f},
                                    {0.229f, 0.322f, 0.546f},
                                    {0.128f, 0.565f, 0.551f},
                                    {0.369f, 0.789f, 0.383f},
                                    {0.993f, 0.906f, 0.144f}};
  float lo = 1e30f, hi = -1e30f;
  for (float v : *values.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  const Shape s = values.shape;
  Tensorf img = Tensorf::zeros({s.n, 3, s.h, s.w});
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const float t = std::clamp((values.at(0, 0, y, x) - lo) / span, 0.0f, 1.0f);
      const float u = t * 4.0f;
      const int i = std::min(int(u), 3);
      const float a = u - float(i);
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) = stops[i][c] + a * (stops[i + 1][c] - stops[i][c]);
    }
  return img;
}

// ------------------------------------------------------------ checkpoints

ParamStore<float> load_net(const std::string& path, const std::string& expected_kind,
                           std::map<std::string, std::string>& config_out) {
  ParamStore<float> params;
  config_out = load_checkpoint(path, params);
  auto it = config_out.find("kind");
  if (it == config_out.end() || it->second != expected_kind)
    throw ConfigError("checkpoint '" + path + "' is not a " + expected_kind +
                      " network");
  return params;
}

// input must divide cleanly through the encoder; suggest the resize flags
void check_extent_compat(const Shape& s, int depth_stages, const std::string& path) {
  const int div = 1 << depth_stages;
  if (s.w % div != 0 || s.h % div != 0)
    throw ConfigError("input '" + path + "' is " + std::to_string(s.w) + "x" +
                      std::to_string(s.h) + ", not divisible by " +
                      std::to_string(div) +
                      "; pass --resize-w/--resize-h to resample it");
}

// -------------------------------------------------------------- cmd: train

struct TrainOpts {
  std::string out, preset = "toy", loss_mode = "mean";
  int width = 0, height = 0, batch = 4;
  std::int64_t steps = 2000, checkpoint_every = 500, warmup = 0;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  double w_p = 0.5, w_v = 1.0, w_d = 0.1, w_c = 1.0;
  std::string patch_sizes = "9,7,5,5";
  double bg = 3.0, fg = 8.0, density = 0.5;
  int dot_size = 3;
  bool textured = false, augment = false, force = false;
  int holdout_scenes = 16;
};

std::array<int, 4> parse_patch_sizes(const std::string& csv) {
  std::array<int, 4> out{};
  std::stringstream ss(csv);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= 4) throw ConfigError("--patch-sizes wants exactly 4 integers");
    out[i++] = std::stoi(tok);
  }
  if (i != 4) throw ConfigError("--patch-sizes wants exactly 4 integers");
  return out;
}

TrainConfig to_train_config(const TrainOpts& o) {
  TrainConfig cfg;
  if (o.preset == "paper") {
    cfg.depth_cfg = DepthNetConfig::paper();
    cfg.conf_cfg = ConfidenceNetConfig::paper();
    cfg.width = 512;
    cfg.height = 256;
  } else if (o.preset == "toy") {
    cfg.depth_cfg = DepthNetConfig::toy();
    cfg.conf_cfg = ConfidenceNetConfig::toy();
    cfg.width = 64;
    cfg.height = 32;
  } else {
    throw ConfigError("unknown preset '" + o.preset + "'");
  }
  if (o.width > 0) cfg.width = o.width;
  if (o.height > 0) cfg.height = o.height;
  cfg.batch = o.batch;
  cfg.total_steps = o.steps;
  cfg.lr = o.lr;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.confidence_warmup = o.warmup;
  cfg.seed = o.seed;
  cfg.weights = LossWeights{o.w_p, o.w_v, o.w_d, o.w_c};
  cfg.mode = o.loss_mode == "paper-sum" ? LossMode::paper_sum : LossMode::mean;
  if (o.loss_mode != "mean" && o.loss_mode != "paper-sum")
    throw ConfigError("unknown loss mode '" + o.loss_mode + "'");
  cfg.patch_sizes = parse_patch_sizes(o.patch_sizes);
  cfg.bg_d = o.bg;
  cfg.fg_d = o.fg;
  cfg.density = o.density;
  cfg.dot_size = o.dot_size;
  cfg.use_textured = o.textured;
  cfg.augment_enabled = o.augment;
  return cfg;
}

int cmd_train(const TrainOpts& o) {
  const std::string out = resolve_out(o.out, "train");
  TrainConfig cfg = to_train_config(o);
  cfg.validate();
  claim_out_dir(out, o.force);

  std::vector<std::pair<std::string, std::string>> kv = {
      {"command", "train"},
      {"preset", o.preset},
      {"width", std::to_string(cfg.width)},
      {"height", std::to_string(cfg.height)},
      {"batch", std::to_string(cfg.batch)},
      {"steps", std::to_string(cfg.total_steps)},
      {"lr", std::to_string(cfg.lr)},
      {"checkpoint_every", std::to_string(cfg.checkpoint_every)},
      {"confidence_warmup", std::to_string(cfg.confidence_warmup)},
      {"seed", std::to_string(cfg.seed)},
      {"loss_mode", o.loss_mode},
      {"w_p", std::to_string(cfg.weights.w_p)},
      {"w_v", std::to_string(cfg.weights.w_v)},
      {"w_d", std::to_string(cfg.weights.w_d)},
      {"w_c", std::to_string(cfg.weights.w_c)},
      {"patch_sizes", o.patch_sizes},
      {"bg_disparity", std::to_string(cfg.bg_d)},
      {"fg_disparity", std::to_string(cfg.fg_d)},
      {"density", std::to_string(cfg.density)},
      {"dot_size", std::to_string(cfg.dot_size)},
      {"textured", cfg.use_textured ? "1" : "0"},
      {"augment", cfg.augment_enabled ? "1" : "0"},
  };
  echo_config(out, kv);

  std::ofstream log(fs::path(out) / "loss_log.csv");
  log.precision(17);
  log << "step,lr,l_pm,l_vr,l_ds,l_dc,l_conf,l_total\n";
  const auto on_step = [&](const StepStats& s) {
    log << s.step << "," << s.lr << "," << s.l_pm << "," << s.l_vr << "," << s.l_ds
        << "," << s.l_dc << "," << s.l_conf << "," << s.l_total << "\n";
    if (s.step % 100 == 0)
      std::cout << "step " << s.step << "  L_total " << s.l_total << "  L_conf "
                << s.l_conf << "\n";
  };

  TrainResult r = train(cfg, on_step, out);
  log.flush();
  if (r.aborted)
    throw NumericError("training aborted at step " + std::to_string(r.abort_step) +
                       " (non-finite loss); last-good checkpoint retained in " + out);

  HoldoutSummary h =
      evaluate_holdout(cfg, r.depth_params, &r.conf_params, o.holdout_scenes, cfg.seed);
  std::ofstream hs(fs::path(out) / "holdout.txt");
  for (std::ostream* os : {static_cast<std::ostream*>(&hs), &std::cout}) {
    *os << "holdout scenes " << h.scenes << "\n"
        << "disparity MAE (px) " << h.mae << "\n"
        << "d1_all " << h.d1 << "\n"
        << "confidence spearman " << h.spearman << "\n"
        << "abs_rel low-confidence decile " << h.low_decile_abs_rel << "\n"
        << "abs_rel high-confidence decile " << h.high_decile_abs_rel << "\n";
  }
  std::cout << "done; checkpoints and logs in " << out << "\n";
  return 0;
}

// -------------------------------------------------------------- cmd: infer

struct InferOpts {
  std::string out, checkpoint, conf_checkpoint;
  std::vector<std::string> inputs;
  int resize_w = 0, resize_h = 0;
  double baseline = 1.0, focal = 1.0;
  bool force = false;
};

int cmd_infer(const InferOpts& o) {
  const std::string out = resolve_out(o.out, "infer");
  std::map<std::string, std::string> dconf_map;
  ParamStore<float> depth_params = load_net(o.checkpoint, "depth", dconf_map);
  DepthNetConfig dcfg = depthnet_config_from_map(dconf_map);

  ParamStore<float> conf_params;
  ConfidenceNetConfig ccfg;
  bool with_conf = !o.conf_checkpoint.empty();
  if (with_conf) {
    std::map<std::string, std::string> cmap;
    conf_params = load_net(o.conf_checkpoint, "confidence", cmap);
    ccfg = confidencenet_config_from_map(cmap);
  }

  for (const std::string& path : o.inputs)
    if (!fs::exists(path)) throw IoError("input image not found: " + path);
  claim_out_dir(out, o.force);
  CameraRig rig{o.baseline, o.focal};

  for (const std::string& path : o.inputs) {
    Tensorf img = read_image8<float>(path);
    if (o.resize_w > 0 && o.resize_h > 0)
      img = resize_bilinear(img, o.resize_w, o.resize_h);
    check_extent_compat(img.shape, dcfg.encoder_depth, path);
    if (with_conf) check_extent_compat(img.shape, ccfg.stages, path);

    const std::string stem = stem_of(path);
    DisparityMap<float> d = infer_disparity(img, depth_params, dcfg);
    write_pfm((fs::path(out) / (stem + "_disp.pfm")).string(), d.values);
    write_image8((fs::path(out) / (stem + "_disp.png")).string(),
                 colormap_perceptual(d.values));

    DepthMap<float> D = disparity_to_depth(d, rig);
    write_pfm((fs::path(out) / (stem + "_depth.pfm")).string(), D.values);
    write_image8((fs::path(out) / (stem + "_depth.png")).string(),
                 colormap_perceptual(D.values));

    if (with_conf) {
      ConfidenceMap<float> c = confidencenet_forward(img, conf_params, ccfg);
      write_pfm((fs::path(out) / (stem + "_conf.pfm")).string(), c.values);
      write_image8((fs::path(out) / (stem + "_conf.png")).string(),
                   colormap_red_yellow(c.values));
    }
    std::cout << stem << ": wrote disparity/depth" << (with_conf ? "/confidence" : "")
              << " maps\n";
  }
  return 0;
}

// --------------------------------------------------------------- cmd: eval

struct EvalOpts {
  std::string out, manifest, checkpoint, conf_checkpoint, pred_dir;
  int resize_w = 0, resize_h = 0;
  double cap = 80.0, baseline = 1.0, focal = 1.0;
  bool force = false;
};

// disparity resampled to new extents scales horizontally with the width
Tensorf resize_disparity(const Tensorf& d, int w, int h) {
  if (d.shape.w == w && d.shape.h == h) return d;
  Tensorf r = resize_bilinear(d, w, h);
  const float sx = float(w) / float(d.shape.w);
  for (auto& v : *r.data) v *= sx;
  return r;
}

int cmd_eval(const EvalOpts& o) {
  if (o.checkpoint.empty() && o.pred_dir.empty())
    throw ConfigError("eval needs --checkpoint or --pred-dir");
  const std::string out = resolve_out(o.out, "eval");

  ParamStore<float> depth_params;
  DepthNetConfig dcfg;
  if (!o.checkpoint.empty()) {
    std::map<std::string, std::string> m;
    depth_params = load_net(o.checkpoint, "depth", m);
    dcfg = depthnet_config_from_map(m);
  }
  ParamStore<float> conf_params;
  ConfidenceNetConfig ccfg;
  bool with_conf = !o.conf_checkpoint.empty();
  if (with_conf) {
    std::map<std::string, std::string> m;
    conf_params = load_net(o.conf_checkpoint, "confidence", m);
    ccfg = confidencenet_config_from_map(m);
  }

  const std::vector<ManifestEntry> entries = read_manifest(o.manifest);
  claim_out_dir(out, o.force);
  CameraRig rig{o.baseline, o.focal};

  std::vector<std::pair<std::string, DepthMetrics>> rows;
  std::vector<DepthMetrics> pooled;
  double outlier_px = 0, valid_px = 0;
  std::vector<double> conf_flat, relerr_flat;

  for (const ManifestEntry& e : entries) {
    const std::string name = stem_of(e.left);
    if (e.gt.empty()) {
      std::cerr << "warning: " << name << " has no ground truth, skipped\n";
      continue;
    }
    GtDisparity<float> gt;
    try {
      gt = load_gt_disparity<float>(e.gt);
    } catch (const IoError& err) {
      std::cerr << "warning: " << name << ": " << err.what() << ", skipped\n";
      continue;
    }
    const int gw = gt.map.values.shape.w, gh = gt.map.values.shape.h;

    Tensorf pred_values, conf_values;
    if (!o.pred_dir.empty()) {
      fs::path p = fs::path(o.pred_dir) / (name + "_disp.pfm");
      if (!fs::exists(p)) p = fs::path(o.pred_dir) / (name + ".pfm");
      pred_values = read_pfm<float>(p.string());
      fs::path cp = fs::path(o.pred_dir) / (name + "_conf.pfm");
      if (fs::exists(cp)) conf_values = read_pfm<float>(cp.string());
    } else {
      Tensorf img = read_image8<float>(e.left);
      if (o.resize_w > 0 && o.resize_h > 0)
        img = resize_bilinear(img, o.resize_w, o.resize_h);
      check_extent_compat(img.shape, dcfg.encoder_depth, e.left);
      pred_values = infer_disparity(img, depth_params, dcfg).values;
      if (with_conf) {
        check_extent_compat(img.shape, ccfg.stages, e.left);
        conf_values = confidencenet_forward(img, conf_params, ccfg).values;
      }
    }
    pred_values = resize_disparity(pred_values, gw, gh);
    if (conf_values.defined() && (conf_values.shape.w != gw || conf_values.shape.h != gh))
      conf_values = resize_bilinear(conf_values, gw, gh);

    DisparityMap<float> pred_d{pred_values, Side::left};
    DepthMap<float> pred_depth = disparity_to_depth(pred_d, rig);
    DepthMap<float> gt_depth = disparity_to_depth(gt.map, rig);
    DepthMetrics m = depth_metrics(pred_depth, gt_depth, gt.mask, o.cap);
    m.d1_all = d1_all(pred_d, gt.map, gt.mask);
    rows.emplace_back(name, m);
    pooled.push_back(m);

    const float* mk = gt.mask.data->data();
    std::int64_t n_mask = 0;
    for (std::int64_t i = 0; i < gt.mask.numel(); ++i)
      if (mk[i] > 0.5f) ++n_mask;
    outlier_px += m.d1_all * double(n_mask);
    valid_px += double(n_mask);

    if (conf_values.defined()) {
      const float* pv = pred_values.data->data();
      const float* gv = gt.map.values.data->data();
      const float* cv = conf_values.data->data();
      for (std::int64_t i = 0; i < gt.map.values.numel(); ++i) {
        if (mk[i] <= 0.5f || gv[i] <= 0.0f) continue;
        conf_flat.push_back(double(cv[i]));
        relerr_flat.push_back(std::abs(double(pv[i]) - double(gv[i])) / double(gv[i]));
      }
    }
  }

  if (rows.empty()) throw IoError("eval: every manifest entry was skipped");

  DepthMetrics agg = aggregate_metrics(pooled);
  agg.d1_all = valid_px > 0 ? outlier_px / valid_px : 0.0;
  rows.emplace_back("aggregate", agg);
  std::ofstream csv(fs::path(out) / "metrics.csv");
  write_metrics_csv(csv, rows);

  std::cout.precision(6);
  std::cout << "images " << pooled.size() << "  abs_rel " << agg.abs_rel << "  rmse "
            << agg.rmse << "  d1_all " << agg.d1_all << "  delta1 " << agg.delta1
            << "\n";

  if (!conf_flat.empty()) {
    const int n = int(conf_flat.size());
    Tensord cv = Tensord::zeros({1, 1, 1, n}), pv = Tensord::zeros({1, 1, 1, n});
    Tensord gv = Tensord::full({1, 1, 1, n}, 1.0), mk = Tensord::full({1, 1, 1, n}, 1.0);
    for (int i = 0; i < n; ++i) {
      (*cv.data)[i] = conf_flat[i];
      (*pv.data)[i] = 1.0 + relerr_flat[i];
    }
    CalibrationReport rep =
        confidence_calibration(ConfidenceMap<double>{cv}, pv, gv, mk, 10);
    std::ofstream cal(fs::path(out) / "calibration.txt");
    cal << "spearman " << rep.spearman << "\n";
    for (std::size_t b = 0; b < rep.bin_mean_abs_rel.size(); ++b)
      cal << "bin " << b << " mean_abs_rel " << rep.bin_mean_abs_rel[b] << "\n";
    std::cout << "confidence spearman " << rep.spearman << "\n";
  }
  std::cout << "metrics written to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------- cmd: landscape

struct LandscapeOpts {
  std::string out;
  int width = 96, height = 32, window = 5;
  double d_true = 8.0, lo = 0.0, hi = 16.0, step = 0.25;
  std::uint64_t seed = 21;
  bool force = false;
};

int cmd_landscape(const LandscapeOpts& o) {
  const std::string out = resolve_out(o.out, "landscape");
  if (o.d_true < o.lo || o.d_true > o.hi)
    std::cerr << "warning: sweep range [" << o.lo << ", " << o.hi
              << "] excludes d_true " << o.d_true << "\n";
  StereoSample<double> s = gen_textured_scene<double>(
      o.width, o.height, TextureSpec{}, DisparitySpec::constant(o.d_true), o.seed);
  LandscapeResult r =
      sweep_landscape(s.left, s.right, o.lo, o.hi, o.step, o.window, o.d_true);

  claim_out_dir(out, o.force);
  std::ofstream csv(fs::path(out) / "sweep.csv");
  csv.precision(17);
  csv << "hypothesis,l_pm,l1_photometric\n";
  for (const LandscapePoint& p : r.points)
    csv << p.hypothesis << "," << p.l_pm << "," << p.l1 << "\n";

  std::ofstream sum(fs::path(out) / "summary.txt");
  for (std::ostream* os : {static_cast<std::ostream*>(&sum), &std::cout}) {
    *os << "d_true " << o.d_true << "\n"
        << "patch_zncc argmin " << r.pm.argmin << "  |argmin - d_true| "
        << r.pm.distance_to_true << "  local_minima " << r.pm.local_minima << "\n"
        << "l1_photometric argmin " << r.l1.argmin << "  |argmin - d_true| "
        << r.l1.distance_to_true << "  local_minima " << r.l1.local_minima << "\n";
  }
  return 0;
}

// ----------------------------------------------------------- cmd: gen-data

struct GenDataOpts {
  std::string out, layout = "two-plane", kind = "dots", gt_format = "pfm";
  int count = 8, width = 64, height = 32;
  double d0 = 3.0, d1 = 8.0, density = 0.5;
  std::uint64_t seed = 1;
  bool force = false;
};

int cmd_gendata(const GenDataOpts& o) {
  const std::string out = resolve_out(o.out, "gen-data");
  DisparitySpec spec;
  if (o.layout == "two-plane")
    spec = DisparitySpec::two_plane(o.d0, o.d1);
  else if (o.layout == "constant")
    spec = DisparitySpec::constant(o.d0);
  else if (o.layout == "slanted")
    spec = DisparitySpec::slanted(o.d0, o.d1);
  else
    throw ConfigError("unknown layout '" + o.layout + "'");
  if (o.kind != "dots" && o.kind != "textured")
    throw ConfigError("unknown scene kind '" + o.kind + "'");
  if (o.gt_format != "pfm" && o.gt_format != "pgm16")
    throw ConfigError("unknown gt format '" + o.gt_format + "'");

  claim_out_dir(out, o.force);
  std::ofstream manifest(fs::path(out) / "manifest.txt");
  manifest << "# left right gt\n";
  for (int i = 0; i < o.count; ++i) {
    StereoSample<float> s =
        o.kind == "dots"
            ? gen_random_dot_stereogram<float>(o.width, o.height, spec, o.density,
                                               o.seed + std::uint64_t(i))
            : gen_textured_scene<float>(o.width, o.height, TextureSpec{}, spec,
                                        o.seed + std::uint64_t(i));
    char base[32];
    std::snprintf(base, sizeof(base), "scene_%04d", i);
    const std::string left = (fs::path(out) / (std::string(base) + "_left.png")).string();
    const std::string right =
        (fs::path(out) / (std::string(base) + "_right.png")).string();
    const std::string gt =
        (fs::path(out) / (std::string(base) + "_gt." +
                          (o.gt_format == "pfm" ? "pfm" : "pgm")))
            .string();
    write_image8(left, s.left);
    write_image8(right, s.right);
    // zero marks invalid pixels in both gt formats
    Tensorf masked = s.gt.values.clone();
    for (std::int64_t k = 0; k < masked.numel(); ++k)
      if ((*s.gt_mask.data)[k] <= 0.5f) (*masked.data)[k] = 0.0f;
    if (o.gt_format == "pfm")
      write_pfm(gt, masked);
    else
      write_pgm16(gt, masked);
    manifest << left << " " << right << " " << gt << "\n";
  }
  std::cout << "wrote " << o.count << " scenes and manifest.txt to " << out << "\n";
  return 0;
}

// --------------------------------------------------------- cmd: grad-check

struct GradCheckOpts {
  std::uint64_t seed = 7;
  double step = 1e-5, threshold = 1e-4;
};

int cmd_gradcheck(const GradCheckOpts& o) {
  std::vector<GradCheckResult> results = gradient_suite(o.seed, o.step);
  bool ok = true;
  std::cout.precision(3);
  std::cout << std::scientific;
  for (const GradCheckResult& r : results) {
    const bool pass = r.max_rel_error < o.threshold;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << r.name << "  max rel err "
              << r.max_rel_error << "\n";
  }
  if (!ok) throw NumericError("gradient check failed");
  std::cout << "all gradients match finite differences below " << o.threshold << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-based self-supervised stereo depth"};
  app.require_subcommand(1);

  TrainOpts t;
  CLI::App* train_cmd = app.add_subcommand("train", "train depth + confidence nets");
  train_cmd->set_config("--config");
  train_cmd->add_option("--out", t.out, "output directory");
  train_cmd->add_option("--preset", t.preset, "toy|paper");
  train_cmd->add_option("--loss-mode", t.loss_mode, "mean|paper-sum");
  train_cmd->add_option("--width", t.width, "image width (0 = preset default)");
  train_cmd->add_option("--height", t.height, "image height (0 = preset default)");
  train_cmd->add_option("--batch", t.batch, "batch size");
  train_cmd->add_option("--steps", t.steps, "total optimization steps");
  train_cmd->add_option("--lr", t.lr, "Adam learning rate (halved mid-run)");
  train_cmd->add_option("--checkpoint-every", t.checkpoint_every, "step interval");
  train_cmd->add_option("--confidence-warmup", t.warmup,
                        "depth-only steps before confidence training");
  train_cmd->add_option("--seed", t.seed, "rng seed");
  train_cmd->add_option("--w-pm", t.w_p, "patch matching weight");
  train_cmd->add_option("--w-vr", t.w_v, "view reconstruction weight");
  train_cmd->add_option("--w-ds", t.w_d, "smoothness weight");
  train_cmd->add_option("--w-dc", t.w_c, "consistency weight");
  train_cmd->add_option("--patch-sizes", t.patch_sizes, "4 window sizes, coarse->fine");
  train_cmd->add_option("--bg-disparity", t.bg, "background plane disparity");
  train_cmd->add_option("--fg-disparity", t.fg, "foreground plane disparity");
  train_cmd->add_option("--density", t.density, "stereogram dot density");
  train_cmd->add_option("--dot-size", t.dot_size, "stereogram dot block size (px)");
  train_cmd->add_flag("--textured", t.textured, "textured scenes instead of dots");
  train_cmd->add_flag("--augment", t.augment, "enable photometric augmentation");
  train_cmd->add_option("--holdout-scenes", t.holdout_scenes, "post-train eval scenes");
  train_cmd->add_flag("--force", t.force, "reuse an existing output directory");

  InferOpts inf;
  CLI::App* infer_cmd = app.add_subcommand("infer", "predict maps from a checkpoint");
  infer_cmd->set_config("--config");
  infer_cmd->add_option("--out", inf.out, "output directory");
  infer_cmd->add_option("--checkpoint", inf.checkpoint, "depth checkpoint")->required();
  infer_cmd->add_option("--confidence-checkpoint", inf.conf_checkpoint,
                        "confidence checkpoint");
  infer_cmd->add_option("--input", inf.inputs, "left image(s)")->required();
  infer_cmd->add_option("--resize-w", inf.resize_w, "resample input width");
  infer_cmd->add_option("--resize-h", inf.resize_h, "resample input height");
  infer_cmd->add_option("--baseline", inf.baseline, "rig baseline (m)");
  infer_cmd->add_option("--focal", inf.focal, "focal length (px)");
  infer_cmd->add_flag("--force", inf.force, "reuse an existing output directory");

  EvalOpts ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against gt");
  eval_cmd->set_config("--config");
  eval_cmd->add_option("--out", ev.out, "output directory");
  eval_cmd->add_option("--manifest", ev.manifest, "left right gt lines")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "depth checkpoint");
  eval_cmd->add_option("--confidence-checkpoint", ev.conf_checkpoint,
                       "confidence checkpoint");
  eval_cmd->add_option("--pred-dir", ev.pred_dir, "directory of predicted .pfm maps");
  eval_cmd->add_option("--cap", ev.cap, "depth cap (m)");
  eval_cmd->add_option("--baseline", ev.baseline, "rig baseline (m)");
  eval_cmd->add_option("--focal", ev.focal, "focal length (px)");
  eval_cmd->add_option("--resize-w", ev.resize_w, "resample input width");
  eval_cmd->add_option("--resize-h", ev.resize_h, "resample input height");
  eval_cmd->add_flag("--force", ev.force, "reuse an existing output directory");

  LandscapeOpts l;
  CLI::App* land_cmd = app.add_subcommand("landscape", "constant-disparity loss sweep");
  land_cmd->set_config("--config");
  land_cmd->add_option("--out", l.out, "output directory");
  land_cmd->add_option("--width", l.width, "scene width");
  land_cmd->add_option("--height", l.height, "scene height");
  land_cmd->add_option("--d-true", l.d_true, "true constant disparity");
  land_cmd->add_option("--lo", l.lo, "sweep start");
  land_cmd->add_option("--hi", l.hi, "sweep end");
  land_cmd->add_option("--step", l.step, "sweep step");
  land_cmd->add_option("--window", l.window, "patch window");
  land_cmd->add_option("--seed", l.seed, "rng seed");
  land_cmd->add_flag("--force", l.force, "reuse an existing output directory");

  GenDataOpts gd;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "emit synthetic stereo scenes");
  gen_cmd->set_config("--config");
  gen_cmd->add_option("--out", gd.out, "output directory");
  gen_cmd->add_option("--count", gd.count, "number of scenes");
  gen_cmd->add_option("--width", gd.width, "scene width");
  gen_cmd->add_option("--height", gd.height, "scene height");
  gen_cmd->add_option("--layout", gd.layout, "two-plane|constant|slanted");
  gen_cmd->add_option("--kind", gd.kind, "dots|textured");
  gen_cmd->add_option("--d0", gd.d0, "first disparity (bg/constant/left edge)");
  gen_cmd->add_option("--d1", gd.d1, "second disparity (fg/right edge)");
  gen_cmd->add_option("--density", gd.density, "dot density");
  gen_cmd->add_option("--gt-format", gd.gt_format, "pfm|pgm16");
  gen_cmd->add_option("--seed", gd.seed, "rng seed");
  gen_cmd->add_flag("--force", gd.force, "reuse an existing output directory");

  GradCheckOpts gc;
  CLI::App* grad_cmd =
      app.add_subcommand("grad-check", "finite-difference gradient verification");
  grad_cmd->add_option("--seed", gc.seed, "rng seed");
  grad_cmd->add_option("--step", gc.step, "finite-difference step");
  grad_cmd->add_option("--threshold", gc.threshold, "max relative error allowed");

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(t);
    if (infer_cmd->parsed()) return cmd_infer(inf);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (land_cmd->parsed()) return cmd_landscape(l);
    if (gen_cmd->parsed()) return cmd_gendata(gd);
    if (grad_cmd->parsed()) return cmd_gradcheck(gc);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version exit cleanly, usage errors -> 1
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
