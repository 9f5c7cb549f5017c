#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pd/losses.hpp"
#include "pd/ops.hpp"

namespace pd {

// Named parameter tensors in a fixed creation order, with per-parameter Adam
// moment buffers and a shared step counter. A store is owned by one trainer;
// read-only forward passes may share it.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> value;
    std::vector<T> m, v;  // Adam first/second moments, shape-matched
  };
  std::vector<Entry> entries;
  std::int64_t step = 0;

  Tensor<T>& add(const std::string& name, Shape shape);
  Tensor<T>& operator[](const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  bool has(const std::string& name) const;
  std::int64_t scalar_count() const;
  void watch_all(Tape<T>& tape);
  void unwatch_all();
};

struct DepthNetConfig {
  int encoder_depth = 4;        // stride-2 stages, each with a stride-1 follower
  int base_channels = 16;
  int max_channels = 64;
  int output_scales = 4;        // fixed: 1/8, 1/4, 1/2, 1
  double d_max_fraction = 0.3;  // disparity cap as a fraction of width at each scale
  std::vector<int> kernel_sizes;  // per encoder stage; decoder and heads use 3

  static DepthNetConfig paper();  // depth 7, 32..512 channels, 7/5 then 3x3
  static DepthNetConfig toy();    // depth 4, 16..64 channels, all 3x3
  void validate() const;
  int skip_connections() const { return encoder_depth - 1; }
  int channels_at(int stage) const;  // stage 1..encoder_depth
};

struct ConfidenceNetConfig {
  int stages = 5;  // stride-2 convs, mirrored by plain upsample stages, no skips
  int base_channels = 16;
  int max_channels = 256;

  static ConfidenceNetConfig paper();  // 5 stages
  static ConfidenceNetConfig toy();    // 3 stages
  void validate() const;
  int channels_at(int stage) const;
};

// He fan-in initialization: kernels ~ N(0, sqrt(2/fan_in)), zero biases,
// deterministic per seed.
template <typename T>
ParamStore<T> init_depthnet(const DepthNetConfig& cfg, std::uint64_t seed);
template <typename T>
ParamStore<T> init_confidencenet(const ConfidenceNetConfig& cfg, std::uint64_t seed);

// Encoder-decoder with skip concatenations; the last 4 decoder stages feed
// 2-channel sigmoid heads scaled to d_max_fraction * W_s, giving (d_l, d_r)
// at 1/8, 1/4, 1/2 and full resolution, all predicted from the left image.
template <typename T>
DisparityPyramid<T> depthnet_forward(const Tensor<T>& I_l, ParamStore<T>& params,
                                     const DepthNetConfig& cfg);

// Plain hourglass without skips; sigmoid head at full resolution.
template <typename T>
ConfidenceMap<T> confidencenet_forward(const Tensor<T>& I_l, ParamStore<T>& params,
                                       const ConfidenceNetConfig& cfg);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  void validate() const;
};

// One bias-corrected Adam update over every entry; requires populated grads.
template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg);

// Base rate until half the budget is spent, then halved once.
double scheduled_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

// String-map (de)serialization of the architecture settings, as stored in
// checkpoint manifests so inference can rebuild the right network.
std::map<std::string, std::string> to_config_map(const DepthNetConfig& cfg);
std::map<std::string, std::string> to_config_map(const ConfidenceNetConfig& cfg);
DepthNetConfig depthnet_config_from_map(const std::map<std::string, std::string>& m);
ConfidenceNetConfig confidencenet_config_from_map(
    const std::map<std::string, std::string>& m);

// Single-file checkpoint: JSON manifest (step + free-form config + named
// shapes) followed by raw little-endian float32 buffers for each parameter
// and its Adam moments. Byte-exact across a load/save round trip.
template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params,
                     const std::map<std::string, std::string>& config);
template <typename T>
std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                   ParamStore<T>& params);

}  // namespace pd
