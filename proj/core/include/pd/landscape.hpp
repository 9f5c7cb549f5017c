#pragma once

#include <vector>

#include "pd/losses.hpp"

namespace pd {

struct LandscapePoint {
  double hypothesis = 0;
  double l_pm = 0;  // full-image patch-ZNCC matching loss
  double l1 = 0;    // per-pixel L1 photometric loss
};

struct CurveSummary {
  double argmin = 0;            // hypothesis with the smallest loss
  double distance_to_true = 0;  // |argmin - d_true|
  int local_minima = 0;         // strict interior local minima of the curve
};

struct LandscapeResult {
  std::vector<LandscapePoint> points;
  CurveSummary pm, l1;
};

// Sweeps a constant disparity hypothesis over [lo, hi] and scores both loss
// curves against the stereo pair. Both are evaluated symmetrically (left and
// right anchored, averaged) so the curves differ only in the matching cost.
template <typename T>
LandscapeResult sweep_landscape(const Tensor<T>& I_l, const Tensor<T>& I_r, double lo,
                                double hi, double step, int window, double d_true);

}  // namespace pd
