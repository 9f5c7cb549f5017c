#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pd/losses.hpp"
#include "pd/stereo.hpp"

namespace pd {

// One Table-1-style row. d1_all is filled by the evaluation harness when
// disparities are available; depth_metrics itself leaves it at 0.
struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0, d1_all = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  std::int64_t n_valid = 0;
};

inline constexpr double kMinDepth = 1e-3;

// Errors over pixels where mask > 0.5 and gt lies in (0, cap]; predictions are
// clamped to [kMinDepth, cap] first. Throws NumericError when nothing is valid.
template <typename T>
DepthMetrics depth_metrics(const DepthMap<T>& pred, const DepthMap<T>& gt,
                           const Tensor<T>& mask, double cap);

// Fraction of valid pixels with |pred - gt| > 3 px and > 5% of gt.
template <typename T>
double d1_all(const DisparityMap<T>& pred, const DisparityMap<T>& gt,
              const Tensor<T>& mask);

struct CalibrationReport {
  std::vector<double> bin_mean_abs_rel;  // equal-population bins, ascending confidence
  double spearman = 0;                   // rank corr of confidence vs negative error
};

// Per-pixel abs_rel between pred and gt value maps, binned by confidence.
// Ties get averaged ranks, so constant confidence correlates to exactly 0.
template <typename T>
CalibrationReport confidence_calibration(const ConfidenceMap<T>& confidence,
                                         const Tensor<T>& pred, const Tensor<T>& gt,
                                         const Tensor<T>& mask, int n_bins);
template <typename T>
CalibrationReport confidence_calibration(const ConfidenceMap<T>& confidence,
                                         const DepthMap<T>& pred, const DepthMap<T>& gt,
                                         const Tensor<T>& mask, int n_bins);

// Pixel-weighted pooling of per-image rows (weights = n_valid).
DepthMetrics aggregate_metrics(const std::vector<DepthMetrics>& rows);

// CSV with a header and the fixed column order
// image,abs_rel,sq_rel,rmse,rmse_log,d1_all,delta1,delta2,delta3,n_valid.
void write_metrics_csv(std::ostream& os,
                       const std::vector<std::pair<std::string, DepthMetrics>>& rows);
std::vector<std::pair<std::string, DepthMetrics>> read_metrics_csv(std::istream& is);

}  // namespace pd
