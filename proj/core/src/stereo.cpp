#include "pd/stereo.hpp"

#include <cmath>
#include <string>

namespace pd {

void CameraRig::validate() const {
  if (!(baseline_b > 0) || !std::isfinite(baseline_b))
    throw ConfigError("CameraRig: baseline_b must be positive and finite, got " +
                      std::to_string(baseline_b));
  if (!(focal_f > 0) || !std::isfinite(focal_f))
    throw ConfigError("CameraRig: focal_f must be positive and finite, got " +
                      std::to_string(focal_f));
}

template <typename T>
void validate_disparity(const DisparityMap<T>& d) {
  const Shape s = d.values.shape;
  if (s.c != 1)
    throw ConfigError("DisparityMap: expected one channel, got shape " + s.str());
  const T dmax = T(kDispMaxFrac) * T(s.w);
  for (T v : *d.values.data) {
    if (!(v >= T(0)) || v > dmax)
      throw ConfigError("DisparityMap: value " + std::to_string(double(v)) +
                        " outside [0, " + std::to_string(double(dmax)) + "]");
  }
}

template <typename T>
DepthMap<T> disparity_to_depth(const DisparityMap<T>& d, const CameraRig& rig) {
  rig.validate();
  const Shape s = d.values.shape;
  DepthMap<T> out{Tensor<T>::zeros(s), Tensor<T>::zeros(s)};
  const T bf = T(rig.baseline_b * rig.focal_f);
  const T* pd_ = d.values.data->data();
  T* pz = out.values.data->data();
  T* pf = out.floored.data->data();
  for (std::int64_t i = 0; i < s.numel(); ++i) {
    if (pd_[i] < T(kDispEps)) {
      pz[i] = bf / T(kDispEps);
      pf[i] = T(1);
    } else {
      pz[i] = bf / pd_[i];
    }
  }
  return out;
}

template <typename T>
DisparityMap<T> depth_to_disparity(const DepthMap<T>& depth, const CameraRig& rig,
                                   Side side) {
  rig.validate();
  const Shape s = depth.values.shape;
  DisparityMap<T> out{Tensor<T>::zeros(s), side};
  const T bf = T(rig.baseline_b * rig.focal_f);
  const T* pz = depth.values.data->data();
  T* pd_ = out.values.data->data();
  for (std::int64_t i = 0; i < s.numel(); ++i) {
    if (!(pz[i] > T(0)))
      throw NumericError("depth_to_disparity: nonpositive depth " +
                         std::to_string(double(pz[i])) + " at element " +
                         std::to_string(i));
    pd_[i] = bf / pz[i];
  }
  return out;
}

template <typename T>
Tensor<T> x_coordinate_ramp(Shape s) {
  Tensor<T> r = Tensor<T>::zeros({s.n, 1, s.h, s.w});
  T* p = r.data->data();
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) *p++ = T(x);
  return r;
}

template <typename T>
Tensor<T> warp_reconstruct(const Tensor<T>& source, const DisparityMap<T>& d,
                           WarpDir dir) {
  const Shape ss = source.shape, ds = d.values.shape;
  if (ss.n != ds.n || ss.h != ds.h || ss.w != ds.w || ds.c != 1)
    throw ConfigError("warp_reconstruct: disparity " + ds.str() +
                      " does not match source " + ss.str());
  if (dir == WarpDir::reconstruct_right && d.side != Side::right)
    throw ConfigError("warp_reconstruct: reconstruct_right needs a right-referenced disparity");
  if (dir == WarpDir::reconstruct_left && d.side != Side::left)
    throw ConfigError("warp_reconstruct: reconstruct_left needs a left-referenced disparity");

  Tensor<T> base = x_coordinate_ramp<T>(ss);
  Tensor<T> xc = dir == WarpDir::reconstruct_right ? add(base, d.values)
                                                   : sub(base, d.values);
  return horizontal_bilinear_sample(source, xc);
}

template <typename T>
PatchSet<T> sample_patches(const Tensor<T>& image, const DisparityMap<T>* d,
                           int window_n) {
  const Shape s = image.shape;
  if (window_n < 3 || window_n % 2 == 0)
    throw ConfigError("sample_patches: window must be odd and >= 3, got " +
                      std::to_string(window_n));
  if (s.c != 1)
    throw ConfigError("sample_patches: expected single-channel image, got " + s.str() +
                      " (reduce with channel_mean first)");
  if (d) {
    const Shape ds = d->values.shape;
    if (!(ds == Shape{s.n, 1, s.h, s.w}))
      throw ConfigError("sample_patches: disparity " + ds.str() +
                        " does not match image " + s.str());
  }

  const int n = window_n, r = n / 2;
  const int H = s.h, W = s.w, N = s.n;
  // center displacement toward the opposite view
  const T sign = d ? (d->side == Side::left ? T(-1) : T(1)) : T(0);

  Tensor<T> out = Tensor<T>::zeros({N, n * n, H, W});
  const T* img = image.data->data();
  const T* disp = d ? d->values.data->data() : nullptr;
  T* po = out.data->data();

  const auto plane = [&](int b) { return img + std::int64_t(b) * H * W; };
  for (int b = 0; b < N; ++b) {
    const T* ip = plane(b);
    const T* dp = disp ? disp + std::int64_t(b) * H * W : nullptr;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const int e = (dy + r) * n + (dx + r);
        T* orow = po + ((std::int64_t(b) * n * n + e) * H) * W;
        for (int y = 0; y < H; ++y) {
          const int sy = std::clamp(y + dy, 0, H - 1);
          const T* irow = ip + std::int64_t(sy) * W;
          for (int x = 0; x < W; ++x) {
            T sx = T(x + dx);
            if (dp) sx += sign * dp[y * W + x];
            if (sx < T(0)) sx = T(0);
            if (sx > T(W - 1)) sx = T(W - 1);
            const int x0 = std::min(int(sx), W - 1);
            const int x1 = std::min(x0 + 1, W - 1);
            const T a = sx - T(x0);
            orow[std::int64_t(y) * W + x] = (T(1) - a) * irow[x0] + a * irow[x1];
          }
        }
      }
  }

  OpContext<T> ctx;
  ctx.add_input(image);
  if (d) ctx.add_input(d->values);
  ctx.prepare(out);
  Tensor<T> dvals = d ? d->values : Tensor<T>();
  Tensor<T> result = ctx.finish(out, [image, dvals, out, n, r, sign]() {
    const Shape s = image.shape;
    const int H = s.h, W = s.w, N = s.n;
    const T* img = image.data->data();
    const T* disp = dvals.defined() ? dvals.data->data() : nullptr;
    const T* og = out.grad->data();
    T* gimg = image.grad ? image.grad->data() : nullptr;
    T* gd = dvals.defined() && dvals.grad ? dvals.grad->data() : nullptr;
    if (!gimg && !gd) return;
    for (int b = 0; b < N; ++b) {
      const T* ip = img + std::int64_t(b) * H * W;
      const T* dp = disp ? disp + std::int64_t(b) * H * W : nullptr;
      T* gi = gimg ? gimg + std::int64_t(b) * H * W : nullptr;
      T* gdp = gd ? gd + std::int64_t(b) * H * W : nullptr;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int e = (dy + r) * n + (dx + r);
          const T* grow = og + ((std::int64_t(b) * n * n + e) * H) * W;
          for (int y = 0; y < H; ++y) {
            const int sy = std::clamp(y + dy, 0, H - 1);
            const T* irow = ip + std::int64_t(sy) * W;
            T* girow = gi ? gi + std::int64_t(sy) * W : nullptr;
            for (int x = 0; x < W; ++x) {
              const T g = grow[std::int64_t(y) * W + x];
              if (g == T(0)) continue;
              T sx = T(x + dx);
              if (dp) sx += sign * dp[y * W + x];
              const bool interior = sx > T(0) && sx < T(W - 1);
              if (sx < T(0)) sx = T(0);
              if (sx > T(W - 1)) sx = T(W - 1);
              const int x0 = std::min(int(sx), W - 1);
              const int x1 = std::min(x0 + 1, W - 1);
              const T a = sx - T(x0);
              if (girow) {
                girow[x0] += g * (T(1) - a);
                girow[x1] += g * a;
              }
              if (gdp && interior)
                gdp[y * W + x] += g * sign * (irow[x1] - irow[x0]);
            }
          }
        }
    }
  });

  PatchSet<T> ps;
  ps.patches = result;
  ps.window_n = n;
  ps.side = d ? d->side : Side::left;
  ps.shifted = d != nullptr;
  return ps;
}

#define PD_INSTANTIATE_STEREO(T)                                                      \
  template Tensor<T> x_coordinate_ramp<T>(Shape);                                    \
  template void validate_disparity<T>(const DisparityMap<T>&);                       \
  template DepthMap<T> disparity_to_depth<T>(const DisparityMap<T>&, const CameraRig&); \
  template DisparityMap<T> depth_to_disparity<T>(const DepthMap<T>&, const CameraRig&, Side); \
  template Tensor<T> warp_reconstruct<T>(const Tensor<T>&, const DisparityMap<T>&, WarpDir); \
  template PatchSet<T> sample_patches<T>(const Tensor<T>&, const DisparityMap<T>*, int);

PD_INSTANTIATE_STEREO(float)
PD_INSTANTIATE_STEREO(double)

}  // namespace pd
