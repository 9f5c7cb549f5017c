#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pd/data.hpp"
#include "pd/eval.hpp"
#include "pd/losses.hpp"
#include "pd/networks.hpp"

namespace pd {

struct TrainConfig {
  DepthNetConfig depth_cfg = DepthNetConfig::toy();
  ConfidenceNetConfig conf_cfg = ConfidenceNetConfig::toy();
  LossWeights weights;
  LossMode mode = LossMode::mean;
  std::array<int, 4> patch_sizes = kDefaultPatchSizes;

  int width = 64, height = 32;
  int batch = 4;
  std::int64_t total_steps = 2000;
  double lr = 1e-4;  // halved once after half the steps
  std::int64_t checkpoint_every = 500;
  std::int64_t confidence_warmup = 0;  // depth-only steps before ConfidenceNet joins
  std::uint64_t seed = 1;

  // synthetic two-plane training stream
  double bg_d = 3.0, fg_d = 8.0;
  double density = 0.5;
  int dot_size = 3;  // block dots: matching basin spans +-dot_size px
  bool use_textured = false;      // random-dot stereograms by default
  bool augment_enabled = false;   // off: keeps toy runs bit-deterministic
  AugmentConfig aug;

  void validate() const;
};

struct StepStats {
  std::int64_t step = 0;
  double l_pm = 0, l_vr = 0, l_ds = 0, l_dc = 0, l_total = 0;
  double l_conf = 0;  // 0 during warm-up
  double lr = 0;
};

struct TrainResult {
  std::vector<StepStats> log;
  ParamStore<float> depth_params;
  ParamStore<float> conf_params;
  bool aborted = false;         // NaN loss encountered
  std::int64_t abort_step = -1;
};

// Fresh deterministic sample for slot `index` of step `step`.
template <typename T>
StereoSample<T> make_train_sample(const TrainConfig& cfg, std::int64_t step, int index);

// Interleaved training: each step updates DepthNet on L_total, then (after the
// warm-up) ConfidenceNet against the detached 1 - L_PM target from the same
// forward pass. When checkpoint_dir is set, periodic checkpoints plus
// depth_final/conf_final are written there, and a NaN abort leaves
// depth_last_good/conf_last_good behind.
TrainResult train(const TrainConfig& cfg,
                  const std::function<void(const StepStats&)>& on_step = {},
                  const std::string& checkpoint_dir = "");

// Full-resolution left-referenced disparity prediction.
template <typename T>
DisparityMap<T> infer_disparity(const Tensor<T>& left, ParamStore<T>& params,
                                const DepthNetConfig& cfg);

struct HoldoutSummary {
  double mae = 0;       // mean absolute disparity error over valid pixels
  double d1 = 0;        // pooled D1-all
  double spearman = 0;  // confidence vs negative abs_rel (when conf evaluated)
  double low_decile_abs_rel = 0, high_decile_abs_rel = 0;
  int scenes = 0;
};

// Scores a trained model on freshly generated held-out scenes (seed stream
// disjoint from training by construction). Pass conf=nullptr to skip the
// confidence columns.
HoldoutSummary evaluate_holdout(const TrainConfig& cfg, ParamStore<float>& depth,
                                ParamStore<float>* conf, int n_scenes,
                                std::uint64_t seed);

}  // namespace pd
