#include "pd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pd {

namespace {

template <typename T>
void check_extents(Shape a, Shape b, const char* who) {
  if (!(a == b))
    throw ConfigError(std::string(who) + ": shape mismatch " + a.str() + " vs " +
                      b.str());
}

}  // namespace

template <typename T>
DepthMetrics depth_metrics(const DepthMap<T>& pred, const DepthMap<T>& gt,
                           const Tensor<T>& mask, double cap) {
  check_extents<T>(pred.values.shape, gt.values.shape, "depth_metrics");
  check_extents<T>(mask.shape, gt.values.shape, "depth_metrics");
  if (!(cap > 0)) throw ConfigError("depth_metrics: cap must be positive");

  const T* e = pred.values.data->data();
  const T* g = gt.values.data->data();
  const T* m = mask.data->data();
  const std::int64_t n = gt.values.numel();

  DepthMetrics out;
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  std::int64_t d1 = 0, d2 = 0, d3 = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double gv = g[i];
    if (m[i] <= T(0.5) || !(gv > 0) || gv > cap) continue;
    const double ev = std::clamp(double(e[i]), kMinDepth, cap);
    const double diff = ev - gv;
    abs_rel += std::abs(diff) / gv;
    sq_rel += diff * diff / gv;
    sq += diff * diff;
    const double dl = std::log(ev) - std::log(gv);
    sq_log += dl * dl;
    const double ratio = std::max(ev / gv, gv / ev);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
    ++out.n_valid;
  }
  if (out.n_valid == 0)
    throw NumericError("depth_metrics: no valid pixels under mask and cap");
  const double nv = double(out.n_valid);
  out.abs_rel = abs_rel / nv;
  out.sq_rel = sq_rel / nv;
  out.rmse = std::sqrt(sq / nv);
  out.rmse_log = std::sqrt(sq_log / nv);
  out.delta1 = d1 / nv;
  out.delta2 = d2 / nv;
  out.delta3 = d3 / nv;
  return out;
}

template <typename T>
double d1_all(const DisparityMap<T>& pred, const DisparityMap<T>& gt,
              const Tensor<T>& mask) {
  check_extents<T>(pred.values.shape, gt.values.shape, "d1_all");
  check_extents<T>(mask.shape, gt.values.shape, "d1_all");
  const T* e = pred.values.data->data();
  const T* g = gt.values.data->data();
  const T* m = mask.data->data();
  std::int64_t valid = 0, outliers = 0;
  for (std::int64_t i = 0; i < gt.values.numel(); ++i) {
    if (m[i] <= T(0.5)) continue;
    ++valid;
    const double err = std::abs(double(e[i]) - double(g[i]));
    if (err > 3.0 && err > 0.05 * double(g[i])) ++outliers;
  }
  if (valid == 0) throw NumericError("d1_all: no valid pixels under mask");
  return double(outliers) / double(valid);
}

namespace {

// average-rank transform; ties share the mean of their positions
std::vector<double> ranks_of(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double shared = 0.5 * (double(i) + double(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = shared;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;  // degenerate: no ordering information
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

template <typename T>
CalibrationReport confidence_calibration(const ConfidenceMap<T>& confidence,
                                         const Tensor<T>& pred, const Tensor<T>& gt,
                                         const Tensor<T>& mask, int n_bins) {
  check_extents<T>(confidence.values.shape, gt.shape, "confidence_calibration");
  check_extents<T>(pred.shape, gt.shape, "confidence_calibration");
  check_extents<T>(mask.shape, gt.shape, "confidence_calibration");
  if (n_bins < 1) throw ConfigError("confidence_calibration: n_bins must be positive");

  std::vector<double> conf, err;
  const T* c = confidence.values.data->data();
  const T* e = pred.data->data();
  const T* g = gt.data->data();
  const T* m = mask.data->data();
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    if (m[i] <= T(0.5) || !(g[i] > 0)) continue;
    conf.push_back(double(c[i]));
    err.push_back(std::abs(double(e[i]) - double(g[i])) / double(g[i]));
  }
  if (std::int64_t(conf.size()) < n_bins)
    throw NumericError("confidence_calibration: " + std::to_string(conf.size()) +
                       " valid pixels cannot fill " + std::to_string(n_bins) + " bins");

  CalibrationReport report;
  std::vector<double> neg_err(err.size());
  for (std::size_t i = 0; i < err.size(); ++i) neg_err[i] = -err[i];
  report.spearman = pearson(ranks_of(conf), ranks_of(neg_err));

  std::vector<std::size_t> order(conf.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });
  const std::size_t n = order.size();
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t lo = n * std::size_t(b) / n_bins;
    const std::size_t hi = n * std::size_t(b + 1) / n_bins;
    double acc = 0;
    for (std::size_t k = lo; k < hi; ++k) acc += err[order[k]];
    report.bin_mean_abs_rel.push_back(acc / double(hi - lo));
  }
  return report;
}

template <typename T>
CalibrationReport confidence_calibration(const ConfidenceMap<T>& confidence,
                                         const DepthMap<T>& pred, const DepthMap<T>& gt,
                                         const Tensor<T>& mask, int n_bins) {
  return confidence_calibration(confidence, pred.values, gt.values, mask, n_bins);
}

DepthMetrics aggregate_metrics(const std::vector<DepthMetrics>& rows) {
  DepthMetrics out;
  double sq = 0, sq_log = 0;
  for (const DepthMetrics& r : rows) {
    const double w = double(r.n_valid);
    out.abs_rel += w * r.abs_rel;
    out.sq_rel += w * r.sq_rel;
    sq += w * r.rmse * r.rmse;
    sq_log += w * r.rmse_log * r.rmse_log;
    out.d1_all += w * r.d1_all;
    out.delta1 += w * r.delta1;
    out.delta2 += w * r.delta2;
    out.delta3 += w * r.delta3;
    out.n_valid += r.n_valid;
  }
  if (out.n_valid == 0) throw NumericError("aggregate_metrics: no valid pixels");
  const double nv = double(out.n_valid);
  out.abs_rel /= nv;
  out.sq_rel /= nv;
  out.rmse = std::sqrt(sq / nv);
  out.rmse_log = std::sqrt(sq_log / nv);
  out.d1_all /= nv;
  out.delta1 /= nv;
  out.delta2 /= nv;
  out.delta3 /= nv;
  return out;
}

namespace {
constexpr const char* kCsvHeader =
    "image,abs_rel,sq_rel,rmse,rmse_log,d1_all,delta1,delta2,delta3,n_valid";
}

void write_metrics_csv(std::ostream& os,
                       const std::vector<std::pair<std::string, DepthMetrics>>& rows) {
  os << kCsvHeader << "\n";
  os.precision(17);
  for (const auto& [name, r] : rows)
    os << name << ',' << r.abs_rel << ',' << r.sq_rel << ',' << r.rmse << ','
       << r.rmse_log << ',' << r.d1_all << ',' << r.delta1 << ',' << r.delta2 << ','
       << r.delta3 << ',' << r.n_valid << "\n";
}

std::vector<std::pair<std::string, DepthMetrics>> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw IoError("metrics CSV: missing or unexpected header");
  std::vector<std::pair<std::string, DepthMetrics>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 10)
      throw IoError("metrics CSV: malformed row '" + line + "'");
    DepthMetrics r;
    r.abs_rel = std::stod(fields[1]);
    r.sq_rel = std::stod(fields[2]);
    r.rmse = std::stod(fields[3]);
    r.rmse_log = std::stod(fields[4]);
    r.d1_all = std::stod(fields[5]);
    r.delta1 = std::stod(fields[6]);
    r.delta2 = std::stod(fields[7]);
    r.delta3 = std::stod(fields[8]);
    r.n_valid = std::stoll(fields[9]);
    rows.emplace_back(fields[0], r);
  }
  return rows;
}

#define PD_INSTANTIATE_EVAL(T)                                                        \
  template DepthMetrics depth_metrics<T>(const DepthMap<T>&, const DepthMap<T>&,     \
                                         const Tensor<T>&, double);                  \
  template double d1_all<T>(const DisparityMap<T>&, const DisparityMap<T>&,          \
                            const Tensor<T>&);                                        \
  template CalibrationReport confidence_calibration<T>(                              \
      const ConfidenceMap<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
      int);                                                                           \
  template CalibrationReport confidence_calibration<T>(                              \
      const ConfidenceMap<T>&, const DepthMap<T>&, const DepthMap<T>&,               \
      const Tensor<T>&, int);

PD_INSTANTIATE_EVAL(float)
PD_INSTANTIATE_EVAL(double)

}  // namespace pd
