#include "pd/landscape.hpp"

#include <cmath>

#include "pd/stereo.hpp"

namespace pd {

namespace {

CurveSummary summarize(const std::vector<LandscapePoint>& pts, double LandscapePoint::*field,
                       double d_true) {
  CurveSummary s;
  double best = pts.front().*field;
  s.argmin = pts.front().hypothesis;
  for (const LandscapePoint& p : pts) {
    if (p.*field < best) {
      best = p.*field;
      s.argmin = p.hypothesis;
    }
  }
  for (std::size_t i = 1; i + 1 < pts.size(); ++i)
    if (pts[i].*field < pts[i - 1].*field && pts[i].*field < pts[i + 1].*field)
      ++s.local_minima;
  s.distance_to_true = std::abs(s.argmin - d_true);
  return s;
}

}  // namespace

template <typename T>
LandscapeResult sweep_landscape(const Tensor<T>& I_l, const Tensor<T>& I_r, double lo,
                                double hi, double step, int window, double d_true) {
  if (!I_l.defined() || !I_r.defined())
    throw ConfigError("sweep_landscape: undefined input");
  if (!(step > 0) || hi < lo) throw ConfigError("sweep_landscape: bad range");
  const Shape s = I_l.shape;

  LandscapeResult out;
  for (double h = lo; h <= hi + 0.5 * step; h += step) {
    DisparityMap<T> dl{Tensor<T>::full({s.n, 1, s.h, s.w}, T(h)), Side::left};
    DisparityMap<T> dr{Tensor<T>::full({s.n, 1, s.h, s.w}, T(h)), Side::right};

    LandscapePoint p;
    p.hypothesis = h;
    p.l_pm = patch_matching_loss(I_l, I_r, dl, dr, window).first.item();
    Tensor<T> left_hat = warp_reconstruct(I_r, dl, WarpDir::reconstruct_left);
    Tensor<T> right_hat = warp_reconstruct(I_l, dr, WarpDir::reconstruct_right);
    p.l1 = 0.5 * (view_reconstruction_loss(I_l, left_hat).item() +
                  view_reconstruction_loss(I_r, right_hat).item());
    out.points.push_back(p);
  }
  if (out.points.empty()) throw ConfigError("sweep_landscape: empty sweep");
  out.pm = summarize(out.points, &LandscapePoint::l_pm, d_true);
  out.l1 = summarize(out.points, &LandscapePoint::l1, d_true);
  return out;
}

template LandscapeResult sweep_landscape<float>(const Tensor<float>&,
                                                const Tensor<float>&, double, double,
                                                double, int, double);
template LandscapeResult sweep_landscape<double>(const Tensor<double>&,
                                                 const Tensor<double>&, double, double,
                                                 double, int, double);

}  // namespace pd
