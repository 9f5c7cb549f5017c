#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pd/stereo.hpp"
#include "pd/tensor.hpp"

namespace pd {

template <typename T>
struct StereoSample {
  Tensor<T> left, right;  // [1,3,H,W] in [0,1]
  DisparityMap<T> gt;     // left-referenced; undefined when no ground truth
  Tensor<T> gt_mask;      // [1,1,H,W], 1 = valid, 0 = occluded/unknown
  CameraRig rig{};        // optional, baseline 0 when unset
  std::string id;
  bool has_gt() const { return gt.values.defined(); }
};

// Scene disparity layouts for the generators. Disparities are in pixels and
// must stay below 0.3*width.
struct DisparitySpec {
  enum class Kind { constant, two_plane, slanted };
  Kind kind = Kind::constant;
  double d0 = 4.0;  // constant value, background plane, or left edge (slanted)
  double d1 = 8.0;  // foreground plane (two_plane) or right edge (slanted)
  // foreground rectangle for two_plane, in normalized [0,1] image coordinates
  double fg_x0 = 0.3, fg_y0 = 0.3, fg_x1 = 0.7, fg_y1 = 0.7;
  static DisparitySpec constant(double d);
  static DisparitySpec two_plane(double bg, double fg);
  static DisparitySpec slanted(double left_d, double right_d);
};

// Band-limited sinusoid-mixture texture. amplitude 0 degenerates to a
// constant image.
struct TextureSpec {
  int components = 6;
  double min_freq = 1.0;  // cycles across the image width
  double max_freq = 8.0;
  double amplitude = 1.0;
};

// Random-dot stereogram built by exact forward mapping: integer per-pixel
// shifts (the spec's disparities are rounded), nearer surface wins conflicts,
// disoccluded right columns get fresh dots, occluded/out-of-view left pixels
// are masked invalid. gt is exact where valid. dot_size stamps each dot as a
// single-colored square block: blocks give the image a correlation length of
// dot_size pixels, which is what makes the matching basin wider than +-1 px
// and therefore reachable by gradient descent (single-pixel dots decorrelate
// at every integer misalignment).
template <typename T>
StereoSample<T> gen_random_dot_stereogram(int width, int height,
                                          const DisparitySpec& spec,
                                          double density, std::uint64_t seed,
                                          int dot_size = 1);

// Smooth textured pair: the right view is an analytic sinusoid mixture and
// the left view is its bilinear warp by the (possibly fractional) disparity,
// so warp_reconstruct reproduces the left view exactly on the valid mask.
template <typename T>
StereoSample<T> gen_textured_scene(int width, int height, const TextureSpec& tex,
                                   const DisparitySpec& spec, std::uint64_t seed);

struct AugmentConfig {
  double flip_probability = 0.5;
  double gamma_lo = 0.8, gamma_hi = 1.2;
  double brightness_lo = 0.8, brightness_hi = 1.2;
  double color_lo = 0.95, color_hi = 1.05;
  void validate() const;  // 0 < lo <= hi per range, probability in [0,1]
  static AugmentConfig identity();
};

// Random horizontal flip (mirrors both views AND swaps them — the only
// geometrically valid flip of a rectified pair — and drops gt), then gamma,
// brightness and per-channel color scales applied identically to both views,
// clamped to [0,1]. Bit-deterministic for a fixed seed.
template <typename T>
StereoSample<T> augment(const StereoSample<T>& sample, const AugmentConfig& cfg,
                        std::uint64_t seed);

// --- image & disparity file I/O -------------------------------------------

// Bilinear resize of every channel plane to new spatial extents.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, int out_w, int out_h);

template <typename T>
Tensor<T> mirror_horizontal(const Tensor<T>& img);

// 8-bit image files. PNG or binary PPM (P6), chosen by file extension.
template <typename T>
void write_image8(const std::string& path, const Tensor<T>& img);  // [1,C,H,W] in [0,1]
template <typename T>
Tensor<T> read_image8(const std::string& path);  // -> [1,3,H,W] in [0,1]

// PFM: 32-bit float maps, grayscale ("Pf"). Negative scale = little-endian,
// rows bottom-up. Bit-exact for float round trips.
template <typename T>
void write_pfm(const std::string& path, const Tensor<T>& map);  // [1,1,H,W]
template <typename T>
Tensor<T> read_pfm(const std::string& path);

// 16-bit PGM (P5, maxval 65535, big-endian), disparity = raw/256, raw 0
// means invalid.
template <typename T>
void write_pgm16(const std::string& path, const Tensor<T>& disparity);
template <typename T>
struct GtDisparity {
  DisparityMap<T> map;
  Tensor<T> mask;  // 1 valid
};
template <typename T>
GtDisparity<T> load_gt_disparity(const std::string& path);

// Decode both views, convert to [0,1] RGB, bilinear-resize to target_w/h
// (0 keeps the native size).
template <typename T>
StereoSample<T> load_stereo_pair(const std::string& left_path,
                                 const std::string& right_path, int target_w = 0,
                                 int target_h = 0);

// Plain-text dataset manifest: one "left right [gt]" triple per line; blank
// lines and #-comments skipped.
struct ManifestEntry {
  std::string left, right, gt;  // gt may be empty
};
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace pd
