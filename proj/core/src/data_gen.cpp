#include <algorithm>
#include <cmath>
#include <random>

#include "pd/data.hpp"

namespace pd {

DisparitySpec DisparitySpec::constant(double d) {
  DisparitySpec s;
  s.kind = Kind::constant;
  s.d0 = d;
  return s;
}

DisparitySpec DisparitySpec::two_plane(double bg, double fg) {
  DisparitySpec s;
  s.kind = Kind::two_plane;
  s.d0 = bg;
  s.d1 = fg;
  return s;
}

DisparitySpec DisparitySpec::slanted(double left_d, double right_d) {
  DisparitySpec s;
  s.kind = Kind::slanted;
  s.d0 = left_d;
  s.d1 = right_d;
  return s;
}

namespace {

void check_spec_bounds(const DisparitySpec& spec, int width) {
  const double dmax = kDispMaxFrac * width;
  for (double d : {spec.d0, spec.kind == DisparitySpec::Kind::constant ? spec.d0 : spec.d1}) {
    if (d < 0 || d >= dmax)
      throw ConfigError("DisparitySpec: disparity " + std::to_string(d) +
                        " outside [0, " + std::to_string(dmax) + ") for width " +
                        std::to_string(width));
  }
}

double spec_disparity(const DisparitySpec& spec, int x, int y, int W, int H) {
  switch (spec.kind) {
    case DisparitySpec::Kind::constant:
      return spec.d0;
    case DisparitySpec::Kind::two_plane: {
      const double nx = double(x) / (W - 1), ny = double(y) / (H - 1);
      const bool fg = nx >= spec.fg_x0 && nx <= spec.fg_x1 && ny >= spec.fg_y0 &&
                      ny <= spec.fg_y1;
      return fg ? spec.d1 : spec.d0;
    }
    case DisparitySpec::Kind::slanted:
      return spec.d0 + (spec.d1 - spec.d0) * double(x) / (W - 1);
  }
  return spec.d0;
}

}  // namespace

template <typename T>
StereoSample<T> gen_random_dot_stereogram(int width, int height,
                                          const DisparitySpec& spec, double density,
                                          std::uint64_t seed, int dot_size) {
  check_spec_bounds(spec, width);
  if (!(density > 0) || density > 1)
    throw ConfigError("gen_random_dot_stereogram: density must be in (0,1], got " +
                      std::to_string(density));
  if (dot_size < 1)
    throw ConfigError("gen_random_dot_stereogram: dot_size must be >= 1, got " +
                      std::to_string(dot_size));
  const int W = width, H = height;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  StereoSample<T> s;
  s.left = Tensor<T>::zeros({1, 3, H, W});
  s.right = Tensor<T>::zeros({1, 3, H, W});
  s.gt = DisparityMap<T>{Tensor<T>::zeros({1, 1, H, W}), Side::left};
  s.gt_mask = Tensor<T>::zeros({1, 1, H, W});
  s.id = "dots-" + std::to_string(seed);

  const std::int64_t HW = std::int64_t(H) * W;
  T* L = s.left.data->data();
  T* R = s.right.data->data();
  T* G = s.gt.values.data->data();
  T* M = s.gt_mask.data->data();

  auto draw_dot = [&](T* img, int y, int x) {
    for (int c = 0; c < 3; ++c)
      img[c * HW + std::int64_t(y) * W + x] = T(unit(rng));
  };

  // left view: dots with the given density on a dark background; dot_size > 1
  // stamps one random color per cell of a dot_size-aligned lattice
  for (int y0 = 0; y0 < H; y0 += dot_size)
    for (int x0 = 0; x0 < W; x0 += dot_size) {
      if (unit(rng) >= density) continue;
      T color[3] = {T(unit(rng)), T(unit(rng)), T(unit(rng))};
      for (int y = y0; y < std::min(y0 + dot_size, H); ++y)
        for (int x = x0; x < std::min(x0 + dot_size, W); ++x)
          for (int c = 0; c < 3; ++c)
            L[c * HW + std::int64_t(y) * W + x] = color[c];
    }

  std::vector<int> winner(W);       // left x claiming each right column
  std::vector<double> windisp(W);
  for (int y = 0; y < H; ++y) {
    std::fill(winner.begin(), winner.end(), -1);
    std::fill(windisp.begin(), windisp.end(), -1.0);
    // forward map, nearer surface (larger d) wins conflicts
    for (int x = 0; x < W; ++x) {
      const int d = int(std::lround(spec_disparity(spec, x, y, W, H)));
      G[std::int64_t(y) * W + x] = T(d);
      const int xr = x - d;
      if (xr < 0 || xr >= W) continue;
      if (d > windisp[xr]) {
        winner[xr] = x;
        windisp[xr] = d;
      }
    }
    for (int xr = 0; xr < W; ++xr) {
      if (winner[xr] >= 0) {
        const int x = winner[xr];
        for (int c = 0; c < 3; ++c)
          R[c * HW + std::int64_t(y) * W + xr] = L[c * HW + std::int64_t(y) * W + x];
        M[std::int64_t(y) * W + x] = T(1);
      } else if (unit(rng) < density) {
        // disocclusion: fresh dots, unknowable from the left view
        draw_dot(R, y, xr);
      }
    }
  }
  return s;
}

template <typename T>
StereoSample<T> gen_textured_scene(int width, int height, const TextureSpec& tex,
                                   const DisparitySpec& spec, std::uint64_t seed) {
  check_spec_bounds(spec, width);
  if (tex.components < 1)
    throw ConfigError("gen_textured_scene: need at least one texture component");
  const int W = width, H = height;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // per-channel sinusoid banks
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<std::vector<Wave>> bank(3);
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < tex.components; ++j) {
      Wave w;
      const double f = tex.min_freq + (tex.max_freq - tex.min_freq) * unit(rng);
      const double ang = 2.0 * M_PI * unit(rng);
      // frequency is in cycles per image width along the wave direction
      w.fx = f * std::cos(ang) / W;
      w.fy = f * std::sin(ang) / W;
      w.phase = 2.0 * M_PI * unit(rng);
      w.amp = 0.5 + 0.5 * unit(rng);
      bank[c].push_back(w);
    }
  }
  const auto eval = [&](int c, double x, double y) {
    double v = 0, norm = 0;
    for (const Wave& w : bank[c]) {
      v += w.amp * std::sin(2.0 * M_PI * (w.fx * x + w.fy * y) + w.phase);
      norm += w.amp;
    }
    return 0.5 + 0.45 * tex.amplitude * (norm > 0 ? v / norm : 0.0);
  };

  StereoSample<T> s;
  s.left = Tensor<T>::zeros({1, 3, H, W});
  s.right = Tensor<T>::zeros({1, 3, H, W});
  s.gt = DisparityMap<T>{Tensor<T>::zeros({1, 1, H, W}), Side::left};
  s.gt_mask = Tensor<T>::zeros({1, 1, H, W});
  s.id = "tex-" + std::to_string(seed);

  const std::int64_t HW = std::int64_t(H) * W;
  T* L = s.left.data->data();
  T* R = s.right.data->data();
  T* G = s.gt.values.data->data();
  T* M = s.gt_mask.data->data();

  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        R[c * HW + std::int64_t(y) * W + x] = T(eval(c, x, y));

  // left view is the bilinear backward warp of the right view, so the
  // construction inverse is exact even for fractional disparities
  std::vector<double> trow(W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double d = spec_disparity(spec, x, y, W, H);
      G[std::int64_t(y) * W + x] = T(d);
      trow[x] = x - d;
      const double sx = trow[x];
      for (int c = 0; c < 3; ++c) {
        const T* plane = R + c * HW + std::int64_t(y) * W;
        double cx = std::clamp(sx, 0.0, double(W - 1));
        const int x0 = std::min(int(cx), W - 1);
        const int x1 = std::min(x0 + 1, W - 1);
        const double a = cx - x0;
        L[c * HW + std::int64_t(y) * W + x] =
            T((1.0 - a) * double(plane[x0]) + a * double(plane[x1]));
      }
    }
    // validity: target inside the image and not occluded by a nearer pixel
    // to the right (epipolar ordering)
    double run_min = std::numeric_limits<double>::infinity();
    for (int x = W - 1; x >= 0; --x) {
      const bool inside = trow[x] >= 0.0 && trow[x] <= double(W - 1);
      const bool visible = trow[x] < run_min;
      M[std::int64_t(y) * W + x] = (inside && visible) ? T(1) : T(0);
      run_min = std::min(run_min, trow[x]);
    }
  }
  return s;
}

void AugmentConfig::validate() const {
  if (flip_probability < 0 || flip_probability > 1)
    throw ConfigError("AugmentConfig: flip_probability must be in [0,1]");
  // collapsed ranges away from 1 are allowed (pinned transforms); the shipped
  // defaults straddle 1 so the identity stays reachable during training
  auto rng_ok = [](double lo, double hi) { return lo > 0.0 && lo <= hi; };
  if (!rng_ok(gamma_lo, gamma_hi) || !rng_ok(brightness_lo, brightness_hi) ||
      !rng_ok(color_lo, color_hi))
    throw ConfigError("AugmentConfig: ranges must satisfy 0 < lo <= hi");
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.flip_probability = 0;
  c.gamma_lo = c.gamma_hi = 1.0;
  c.brightness_lo = c.brightness_hi = 1.0;
  c.color_lo = c.color_hi = 1.0;
  return c;
}

template <typename T>
Tensor<T> mirror_horizontal(const Tensor<T>& img) {
  const Shape s = img.shape;
  Tensor<T> out = Tensor<T>::zeros(s);
  const T* pi = img.data->data();
  T* po = out.data->data();
  const std::int64_t rows = std::int64_t(s.n) * s.c * s.h;
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* irow = pi + r * s.w;
    T* orow = po + r * s.w;
    for (int x = 0; x < s.w; ++x) orow[x] = irow[s.w - 1 - x];
  }
  return out;
}

template <typename T>
StereoSample<T> augment(const StereoSample<T>& sample, const AugmentConfig& cfg,
                        std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // fixed draw order keeps the stream deterministic regardless of outcomes
  const bool flip = unit(rng) < cfg.flip_probability;
  const double gamma = cfg.gamma_lo + (cfg.gamma_hi - cfg.gamma_lo) * unit(rng);
  const double bright =
      cfg.brightness_lo + (cfg.brightness_hi - cfg.brightness_lo) * unit(rng);
  double color[3];
  for (double& c : color) c = cfg.color_lo + (cfg.color_hi - cfg.color_lo) * unit(rng);

  StereoSample<T> out;
  out.rig = sample.rig;
  out.id = sample.id;
  if (flip) {
    // mirrored right becomes the new left; gt no longer applies
    out.left = mirror_horizontal(sample.right);
    out.right = mirror_horizontal(sample.left);
  } else {
    out.left = sample.left.clone();
    out.right = sample.right.clone();
    out.gt = sample.gt;
    out.gt_mask = sample.gt_mask;
  }

  const bool photometric_identity =
      gamma == 1.0 && bright == 1.0 && color[0] == 1.0 && color[1] == 1.0 &&
      color[2] == 1.0;
  if (photometric_identity) return out;

  const Shape s = out.left.shape;
  const std::int64_t HW = std::int64_t(s.h) * s.w;
  for (Tensor<T>* img : {&out.left, &out.right}) {
    T* p = img->data->data();
    for (int c = 0; c < s.c; ++c) {
      const double k = bright * color[c % 3];
      T* plane = p + std::int64_t(c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        double v = std::pow(std::max(0.0, double(plane[i])), gamma) * k;
        plane[i] = T(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

#define PD_INSTANTIATE_DATA_GEN(T)                                                    \
  template StereoSample<T> gen_random_dot_stereogram<T>(int, int, const DisparitySpec&, \
                                                        double, std::uint64_t, int); \
  template StereoSample<T> gen_textured_scene<T>(int, int, const TextureSpec&,       \
                                                 const DisparitySpec&, std::uint64_t); \
  template Tensor<T> mirror_horizontal<T>(const Tensor<T>&);                         \
  template StereoSample<T> augment<T>(const StereoSample<T>&, const AugmentConfig&,  \
                                      std::uint64_t);

PD_INSTANTIATE_DATA_GEN(float)
PD_INSTANTIATE_DATA_GEN(double)

}  // namespace pd
