#pragma once

#include "pd/ops.hpp"
#include "pd/tape.hpp"
#include "pd/tensor.hpp"

namespace pd {

// Rectified pair: x_r = x_l - d with d >= 0. A map is referenced on the grid
// of its own side; sampling the opposite view shifts by -d on the left grid
// and +d on the right grid.
enum class Side { left, right };

enum class WarpDir { reconstruct_right, reconstruct_left };

struct CameraRig {
  double baseline_b = 0;  // meters
  double focal_f = 0;     // pixels
  void validate() const;
};

// Triangulation floor: disparities below this are clamped before the b*f/d
// division and the pixel is flagged so metrics can skip it.
inline constexpr double kDispEps = 1e-3;

// Disparity ceiling as a fraction of image width.
inline constexpr double kDispMaxFrac = 0.3;

template <typename T>
struct DisparityMap {
  Tensor<T> values;  // [N,1,H,W], pixels at this resolution
  Side side = Side::left;
};

// Throws ConfigError if shape is not [N,1,H,W] or values leave [0, 0.3*W].
// Meant for externally loaded maps; network outputs satisfy this by
// construction (sigmoid-scaled head).
template <typename T>
void validate_disparity(const DisparityMap<T>& d);

template <typename T>
struct DepthMap {
  Tensor<T> values;   // [N,1,H,W], meters, strictly positive
  Tensor<T> floored;  // 1 where disparity hit the kDispEps floor, else 0
};

template <typename T>
struct PatchSet {
  Tensor<T> patches;  // [N, n*n, H, W]; element (dy+r)*n+(dx+r) per center
  int window_n = 0;
  Side side = Side::left;  // grid the centers live on
  bool shifted = false;    // true when centers were displaced by a disparity
};

// D = b*f / max(d, kDispEps). Plain value op (no tape node); used by
// inference and metrics, not by the training losses.
template <typename T>
DepthMap<T> disparity_to_depth(const DisparityMap<T>& d, const CameraRig& rig);

// d = b*f / D. Throws NumericError on nonpositive depth.
template <typename T>
DisparityMap<T> depth_to_disparity(const DepthMap<T>& depth, const CameraRig& rig,
                                   Side side);

// Backward-mapping view synthesis via horizontal bilinear sampling:
//   reconstruct_right: Ir_hat(x,y) = I_l(x + d_r(x,y), y), d referenced right
//   reconstruct_left:  Il_hat(x,y) = I_r(x - d_l(x,y), y), d referenced left
// Differentiable w.r.t. both source and d. Every output pixel is defined
// (no holes), coordinates clamp to the border.
template <typename T>
Tensor<T> warp_reconstruct(const Tensor<T>& source, const DisparityMap<T>& d,
                           WarpDir dir);

// Vectorized n x n neighborhood extraction around every pixel, optionally
// displacing the center columns by the disparity (toward the opposite view:
// x - d on the left grid, x + d on the right grid). Fractional centers are
// sampled with horizontal bilinear weights; rows clamp to the image.
// image must be single-channel (reduce with channel_mean first).
// Differentiable w.r.t. image and d.
template <typename T>
PatchSet<T> sample_patches(const Tensor<T>& image, const DisparityMap<T>* d,
                           int window_n);

// Undisplaced patches (centers at each pixel's own column).
template <typename T>
PatchSet<T> sample_patches(const Tensor<T>& image, int window_n) {
  return sample_patches<T>(image, static_cast<const DisparityMap<T>*>(nullptr), window_n);
}

// [N,1,H,W] ramp holding each pixel's own x coordinate; untaped constant,
// the base grid for building sampling coordinates from disparities.
template <typename T>
Tensor<T> x_coordinate_ramp(Shape s);

}  // namespace pd
