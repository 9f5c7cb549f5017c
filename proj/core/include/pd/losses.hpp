#pragma once

#include <array>
#include <utility>
#include <vector>

#include "pd/ops.hpp"
#include "pd/stereo.hpp"

namespace pd {

struct LossWeights {
  double w_p = 0.5;  // patch matching
  double w_v = 1.0;  // view reconstruction
  double w_d = 0.1;  // disparity smoothness
  double w_c = 1.0;  // disparity consistency
  void validate() const;
};

// Pixel aggregation for the matching/reconstruction terms: per-pixel means
// keep magnitudes resolution-independent (default); paper_sum uses literal
// per-image sums instead. Smoothness/consistency carry their own 1/(x*y)
// factor and are identical in both modes. Batch dimension is always averaged.
enum class LossMode { mean, paper_sum };

template <typename T>
struct LossBreakdown {
  Tensor<T> l_pm, l_vr, l_ds, l_dc, l_total;  // scalars, on tape
  Tensor<T> pm_map;  // [N,1,H,W] per-pixel matching loss at full resolution
};

template <typename T>
struct ConfidenceMap {
  Tensor<T> values;  // [N,1,H,W] in [0,1]
};

// Four scales, coarse to fine: index 0 = 1/8 resolution, 3 = full.
template <typename T>
struct DisparityPyramid {
  std::array<DisparityMap<T>, 4> left;
  std::array<DisparityMap<T>, 4> right;
};

inline constexpr int kPyramidScales = 4;

// Patch windows per pyramid scale, coarse to fine. The coarse scales use the
// larger windows: 9 px at 1/8 and 7 px at 1/4 are equivalent to 72 px and
// 28 px at full resolution.
inline constexpr std::array<int, 4> kDefaultPatchSizes = {9, 7, 5, 5};

// Zero-mean normalized cross-correlation of paired windows, one value per
// center pixel, in [-1,1]. Denominator stabilized as sqrt(varsum_l*varsum_r
// + 1e-8), so two constant patches correlate to 0. Differentiable w.r.t.
// both patch sets.
template <typename T>
Tensor<T> zncc(const PatchSet<T>& left_patches, const PatchSet<T>& right_patches);

// Per-pixel loss 1 - (1+ZNCC)/2, matched left->right and right->left and
// averaged. Returns the aggregated scalar and the per-pixel map.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> patch_matching_loss(
    const Tensor<T>& I_l, const Tensor<T>& I_r, const DisparityMap<T>& d_l,
    const DisparityMap<T>& d_r, int window_n, LossMode mode = LossMode::mean);

// L1 between a view and its reconstruction.
template <typename T>
Tensor<T> view_reconstruction_loss(const Tensor<T>& I_target,
                                   const Tensor<T>& I_reconstructed,
                                   LossMode mode = LossMode::mean);

// (1/(x*y)) * sum |dd/dx| exp(-|dI/dx|) + |dd/dy| exp(-|dI/dy|), forward
// differences, last column/row excluded, image gradient magnitude = mean
// absolute channel gradient. Differentiable w.r.t. d and I.
template <typename T>
Tensor<T> disparity_smoothness_loss(const DisparityMap<T>& d, const Tensor<T>& I);

// (1/(x*y)) * sum |d_l(x,y) - d_r(x - d_l(x,y), y)|, evaluated from both
// anchors and averaged.
template <typename T>
Tensor<T> disparity_consistency_loss(const DisparityMap<T>& d_l,
                                     const DisparityMap<T>& d_r);

// Full training objective over the 4-scale pyramid: every term evaluated per
// scale on 2x area-downsampled images, averaged across scales, then combined
// with the weights. pm_map comes from the full-resolution scale.
template <typename T>
LossBreakdown<T> total_loss(const Tensor<T>& I_l, const Tensor<T>& I_r,
                            const DisparityPyramid<T>& pyramid,
                            const LossWeights& weights,
                            const std::array<int, 4>& patch_sizes = kDefaultPatchSizes,
                            LossMode mode = LossMode::mean);

// 1 - pm_map, detached: a static copy, so no gradient reaches DepthNet
// through the confidence supervision.
template <typename T>
ConfidenceMap<T> confidence_target(const Tensor<T>& pm_map);

// Mean absolute difference between predicted and target confidence.
template <typename T>
Tensor<T> confidence_loss(const ConfidenceMap<T>& target,
                          const ConfidenceMap<T>& predicted);

}  // namespace pd
