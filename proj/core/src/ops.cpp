#include "pd/ops.hpp"

#include <cmath>
#include <limits>

namespace pd {

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!(a.shape == b.shape))
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape.str() +
                      " vs " + b.shape.str());
}

template <typename T>
void check_defined(const Tensor<T>& a, const char* op) {
  if (!a.defined() || a.numel() == 0)
    throw ConfigError(std::string(op) + ": empty tensor");
}

// Elementwise binary op plumbing: fwd(a,b) and per-element input grads.
// A one-element b broadcasts across a (the "scalar second operand" case).
template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_pointwise(const Tensor<T>& a, const Tensor<T>& b, const char* name,
                           Fwd fwd, Bwd bwd) {
  check_defined(a, name);
  check_defined(b, name);
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!b_scalar) check_same_shape(a, b, name);
  Tensor<T> out = Tensor<T>::zeros(a.shape);
  const T* pa = a.data->data();
  const T* pb = b.data->data();
  T* po = out.data->data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[b_scalar ? 0 : i]);

  OpContext<T> ctx;
  ctx.add_input(a);
  ctx.add_input(b);
  ctx.prepare(out);
  return ctx.finish(out, [a, b, out, bwd, n, b_scalar]() {
    const T* og = out.grad->data();
    const T* pa = a.data->data();
    const T* pb = b.data->data();
    T* ga = a.grad ? a.grad->data() : nullptr;
    T* gb = b.grad ? b.grad->data() : nullptr;
    for (std::int64_t i = 0; i < n; ++i) {
      auto [da, db] = bwd(pa[i], pb[b_scalar ? 0 : i]);
      if (ga) ga[i] += og[i] * da;
      if (gb) gb[b_scalar ? 0 : i] += og[i] * db;
    }
  });
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_pointwise(const Tensor<T>& a, const char* name, Fwd fwd, Bwd bwd) {
  check_defined(a, name);
  Tensor<T> out = Tensor<T>::zeros(a.shape);
  const T* pa = a.data->data();
  T* po = out.data->data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);

  OpContext<T> ctx;
  ctx.add_input(a);
  ctx.prepare(out);
  return ctx.finish(out, [a, out, bwd, n]() {
    if (!a.grad) return;
    const T* og = out.grad->data();
    const T* pa = a.data->data();
    const T* po = out.data->data();
    T* ga = a.grad->data();
    for (std::int64_t i = 0; i < n; ++i) ga[i] += og[i] * bwd(pa[i], po[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T, T) { return std::pair<T, T>(T(1), T(1)); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T b) {
  return unary_pointwise(
      a, "add", [b](T x) { return x + b; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T) { return std::pair<T, T>(T(1), T(-1)); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, T b) {
  return add(a, -b);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y) { return std::pair<T, T>(y, x); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary_pointwise(
      a, "scale", [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  // Subgradient at 0 is 0.
  return unary_pointwise(
      a, "abs", [](T x) { return std::fabs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary_pointwise(
      a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_pointwise(
      a, "sigmoid",
      [](T x) {
        T v;
        if (x >= T(0)) {
          v = T(1) / (T(1) + std::exp(-x));
        } else {
          T e = std::exp(x);
          v = e / (T(1) + e);
        }
        // keep the output in the open interval even at saturation
        const T eps = std::numeric_limits<T>::epsilon();
        if (v >= T(1)) v = T(1) - eps / T(2);
        if (v <= T(0)) v = std::numeric_limits<T>::min();
        return v;
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& a) {
  return unary_pointwise(
      a, "elu", [](T x) { return x > T(0) ? x : std::expm1(x); },
      [](T x, T y) { return x > T(0) ? T(1) : y + T(1); });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, Reduce over) {
  check_defined(a, "reduce_mean");
  if (over == Reduce::all) {
    const std::int64_t n = a.numel();
    T acc = T(0);
    for (T v : *a.data) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc / T(n));
    OpContext<T> ctx;
    ctx.add_input(a);
    ctx.prepare(out);
    return ctx.finish(out, [a, out, n]() {
      if (!a.grad) return;
      const T g = (*out.grad)[0] / T(n);
      for (auto& v : *a.grad) v += g;
    });
  }

  const Shape s = a.shape;
  const std::int64_t hw = std::int64_t(s.h) * s.w;
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, 1, 1});
  const T* pa = a.data->data();
  T* po = out.data->data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      T acc = T(0);
      const T* row = pa + (std::int64_t(n) * s.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) acc += row[i];
      po[n * s.c + c] = acc / T(hw);
    }
  OpContext<T> ctx;
  ctx.add_input(a);
  ctx.prepare(out);
  return ctx.finish(out, [a, out, s, hw]() {
    if (!a.grad) return;
    const T* og = out.grad->data();
    T* ga = a.grad->data();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T g = og[n * s.c + c] / T(hw);
        T* row = ga + (std::int64_t(n) * s.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) row[i] += g;
      }
  });
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a) {
  check_defined(a, "reduce_sum");
  T acc = T(0);
  for (T v : *a.data) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  OpContext<T> ctx;
  ctx.add_input(a);
  ctx.prepare(out);
  return ctx.finish(out, [a, out]() {
    if (!a.grad) return;
    const T g = (*out.grad)[0];
    for (auto& v : *a.grad) v += g;
  });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias, int stride, int padding) {
  check_defined(input, "conv2d");
  check_defined(kernel, "conv2d");
  check_defined(bias, "conv2d");
  const Shape in = input.shape, ks = kernel.shape;
  const int k = ks.h;
  if (ks.h != ks.w)
    throw ConfigError("conv2d: kernel must be square, got " + ks.str());
  if (ks.c != in.c)
    throw ConfigError("conv2d: kernel input channels " + std::to_string(ks.c) +
                      " != input channels " + std::to_string(in.c));
  if (bias.numel() != ks.n)
    throw ConfigError("conv2d: bias length " + std::to_string(bias.numel()) +
                      " != output channels " + std::to_string(ks.n));
  if (stride < 1) throw ConfigError("conv2d: stride must be positive");
  if (padding < 0) throw ConfigError("conv2d: padding must be nonnegative");
  const int ho = (in.h + 2 * padding - k) / stride + 1;
  const int wo = (in.w + 2 * padding - k) / stride + 1;
  if (in.h + 2 * padding < k || in.w + 2 * padding < k || ho < 1 || wo < 1)
    throw ConfigError("conv2d: output extent would be empty for input " + in.str() +
                      ", k=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
                      ", padding=" + std::to_string(padding));

  const int N = in.n, Ci = in.c, H = in.h, W = in.w, Co = ks.n;
  Tensor<T> out = Tensor<T>::zeros(Shape{N, Co, ho, wo});
  {
    const T* pin = input.data->data();
    const T* pk = kernel.data->data();
    const T* pb = bias.data->data();
    T* po = out.data->data();
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Co; ++co)
        for (int oy = 0; oy < ho; ++oy) {
          T* orow = po + ((std::int64_t(n) * Co + co) * ho + oy) * wo;
          for (int ox = 0; ox < wo; ++ox) orow[ox] = pb[co];
          for (int ci = 0; ci < Ci; ++ci)
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= H) continue;
              const T* irow = pin + ((std::int64_t(n) * Ci + ci) * H + iy) * W;
              const T* krow = pk + ((std::int64_t(co) * Ci + ci) * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const T w = krow[kx];
                const int ix0 = -padding + kx;
                // clip ox range so ix stays in [0, W)
                int ox_lo = 0, ox_hi = wo;
                if (ix0 < 0) ox_lo = (-ix0 + stride - 1) / stride;
                if (ix0 + (wo - 1) * stride >= W)
                  ox_hi = (W - 1 - ix0) / stride + 1;
                const T* ib = irow + ix0;
                for (int ox = ox_lo; ox < ox_hi; ++ox)
                  orow[ox] += w * ib[ox * stride];
              }
            }
        }
  }

  OpContext<T> ctx;
  ctx.add_input(input);
  ctx.add_input(kernel);
  ctx.add_input(bias);
  ctx.prepare(out);
  return ctx.finish(out, [input, kernel, bias, out, stride, padding, k]() {
    const Shape in = input.shape;
    const int N = in.n, Ci = in.c, H = in.h, W = in.w;
    const int Co = kernel.shape.n, ho = out.shape.h, wo = out.shape.w;
    const T* og = out.grad->data();
    const T* pin = input.data->data();
    const T* pk = kernel.data->data();

    if (bias.grad) {
      T* gb = bias.grad->data();
      for (int co = 0; co < Co; ++co) {
        T acc = T(0);
        for (int n = 0; n < N; ++n) {
          const T* orow = og + (std::int64_t(n) * Co + co) * ho * wo;
          for (std::int64_t i = 0; i < std::int64_t(ho) * wo; ++i) acc += orow[i];
        }
        gb[co] += acc;
      }
    }

    if (kernel.grad) {
      T* gk = kernel.grad->data();
      for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              T acc = T(0);
              for (int n = 0; n < N; ++n)
                for (int oy = 0; oy < ho; ++oy) {
                  const int iy = oy * stride - padding + ky;
                  if (iy < 0 || iy >= H) continue;
                  const T* orow = og + ((std::int64_t(n) * Co + co) * ho + oy) * wo;
                  const T* irow = pin + ((std::int64_t(n) * Ci + ci) * H + iy) * W;
                  const int ix0 = -padding + kx;
                  int ox_lo = 0, ox_hi = wo;
                  if (ix0 < 0) ox_lo = (-ix0 + stride - 1) / stride;
                  if (ix0 + (wo - 1) * stride >= W) ox_hi = (W - 1 - ix0) / stride + 1;
                  const T* ib = irow + ix0;
                  for (int ox = ox_lo; ox < ox_hi; ++ox)
                    acc += orow[ox] * ib[ox * stride];
                }
              gk[((std::int64_t(co) * Ci + ci) * k + ky) * k + kx] += acc;
            }
    }

    if (input.grad) {
      T* gi = input.grad->data();
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
          for (int oy = 0; oy < ho; ++oy) {
            const T* orow = og + ((std::int64_t(n) * Co + co) * ho + oy) * wo;
            for (int ci = 0; ci < Ci; ++ci)
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= H) continue;
                T* grow = gi + ((std::int64_t(n) * Ci + ci) * H + iy) * W;
                const T* krow = pk + ((std::int64_t(co) * Ci + ci) * k + ky) * k;
                for (int kx = 0; kx < k; ++kx) {
                  const T w = krow[kx];
                  const int ix0 = -padding + kx;
                  int ox_lo = 0, ox_hi = wo;
                  if (ix0 < 0) ox_lo = (-ix0 + stride - 1) / stride;
                  if (ix0 + (wo - 1) * stride >= W) ox_hi = (W - 1 - ix0) / stride + 1;
                  T* gb = grow + ix0;
                  for (int ox = ox_lo; ox < ox_hi; ++ox)
                    gb[ox * stride] += w * orow[ox];
                }
              }
          }
    }
  });
}

template <typename T>
Tensor<T> nn_upsample2x(const Tensor<T>& input) {
  check_defined(input, "nn_upsample2x");
  const Shape s = input.shape;
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, s.h * 2, s.w * 2});
  const T* pi = input.data->data();
  T* po = out.data->data();
  const std::int64_t planes = std::int64_t(s.n) * s.c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* ip = pi + p * s.h * s.w;
    T* op = po + p * s.h * s.w * 4;
    for (int y = 0; y < 2 * s.h; ++y) {
      const T* irow = ip + (y / 2) * s.w;
      T* orow = op + std::int64_t(y) * 2 * s.w;
      for (int x = 0; x < 2 * s.w; ++x) orow[x] = irow[x / 2];
    }
  }
  OpContext<T> ctx;
  ctx.add_input(input);
  ctx.prepare(out);
  return ctx.finish(out, [input, out, s]() {
    if (!input.grad) return;
    const T* og = out.grad->data();
    T* gi = input.grad->data();
    const std::int64_t planes = std::int64_t(s.n) * s.c;
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* op = og + p * s.h * s.w * 4;
      T* ip = gi + p * s.h * s.w;
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const T* r0 = op + std::int64_t(2 * y) * 2 * s.w + 2 * x;
          const T* r1 = r0 + 2 * s.w;
          ip[std::int64_t(y) * s.w + x] += r0[0] + r0[1] + r1[0] + r1[1];
        }
    }
  });
}

template <typename T>
Tensor<T> upsample2x_conv(const Tensor<T>& input, const Tensor<T>& kernel,
                          const Tensor<T>& bias) {
  const int k = kernel.shape.h;
  if (k % 2 == 0)
    throw ConfigError("upsample2x_conv: same-padding needs an odd kernel, got k=" +
                      std::to_string(k));
  Tensor<T> up = nn_upsample2x(input);
  return conv2d(up, kernel, bias, 1, (k - 1) / 2);
}

template <typename T>
Tensor<T> horizontal_bilinear_sample(const Tensor<T>& source,
                                     const Tensor<T>& x_coords) {
  check_defined(source, "horizontal_bilinear_sample");
  check_defined(x_coords, "horizontal_bilinear_sample");
  const Shape s = source.shape, xs = x_coords.shape;
  if (xs.n != s.n || xs.h != s.h || xs.w != s.w || xs.c != 1)
    throw ConfigError("horizontal_bilinear_sample: coords " + xs.str() +
                      " incompatible with source " + s.str());
  const int N = s.n, C = s.c, H = s.h, W = s.w;
  Tensor<T> out = Tensor<T>::zeros(s);
  const T* px = x_coords.data->data();
  const T* ps = source.data->data();
  T* po = out.data->data();
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y) {
      const T* xrow = px + (std::int64_t(n) * H + y) * W;
      for (int x = 0; x < W; ++x) {
        const T xc = xrow[x];
        if (!std::isfinite(double(xc)))
          throw NumericError("horizontal_bilinear_sample: non-finite coordinate at (n=" +
                             std::to_string(n) + ", y=" + std::to_string(y) +
                             ", x=" + std::to_string(x) + ")");
        T t = xc < T(0) ? T(0) : (xc > T(W - 1) ? T(W - 1) : xc);
        int x0 = int(t);
        if (x0 > W - 1) x0 = W - 1;
        const T a = t - T(x0);
        const int x1 = x0 + 1 <= W - 1 ? x0 + 1 : W - 1;
        for (int c = 0; c < C; ++c) {
          const T* srow = ps + ((std::int64_t(n) * C + c) * H + y) * W;
          po[((std::int64_t(n) * C + c) * H + y) * W + x] =
              (T(1) - a) * srow[x0] + a * srow[x1];
        }
      }
    }

  OpContext<T> ctx;
  ctx.add_input(source);
  ctx.add_input(x_coords);
  ctx.prepare(out);
  return ctx.finish(out, [source, x_coords, out, N, C, H, W]() {
    const T* og = out.grad->data();
    const T* px = x_coords.data->data();
    const T* ps = source.data->data();
    T* gs = source.grad ? source.grad->data() : nullptr;
    T* gx = x_coords.grad ? x_coords.grad->data() : nullptr;
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y) {
        const T* xrow = px + (std::int64_t(n) * H + y) * W;
        for (int x = 0; x < W; ++x) {
          const T xc = xrow[x];
          T t = xc < T(0) ? T(0) : (xc > T(W - 1) ? T(W - 1) : xc);
          int x0 = int(t);
          if (x0 > W - 1) x0 = W - 1;
          const T a = t - T(x0);
          const int x1 = x0 + 1 <= W - 1 ? x0 + 1 : W - 1;
          const bool interior = xc > T(0) && xc < T(W - 1);
          T gcoord = T(0);
          for (int c = 0; c < C; ++c) {
            const std::int64_t base = ((std::int64_t(n) * C + c) * H + y) * W;
            const T g = og[base + x];
            if (gs) {
              gs[base + x0] += (T(1) - a) * g;
              gs[base + x1] += a * g;
            }
            if (gx && interior) gcoord += g * (ps[base + x1] - ps[base + x0]);
          }
          if (gx) gx[(std::int64_t(n) * H + y) * W + x] += gcoord;
        }
      }
  });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a, "concat_channels");
  check_defined(b, "concat_channels");
  const Shape sa = a.shape, sb = b.shape;
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw ConfigError("concat_channels: shape mismatch " + sa.str() + " vs " + sb.str());
  Tensor<T> out = Tensor<T>::zeros(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::int64_t hw = std::int64_t(sa.h) * sa.w;
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.data->data() + std::int64_t(n) * sa.c * hw, sa.c * hw,
                out.data->data() + std::int64_t(n) * (sa.c + sb.c) * hw);
    std::copy_n(b.data->data() + std::int64_t(n) * sb.c * hw, sb.c * hw,
                out.data->data() + std::int64_t(n) * (sa.c + sb.c) * hw + sa.c * hw);
  }
  OpContext<T> ctx;
  ctx.add_input(a);
  ctx.add_input(b);
  ctx.prepare(out);
  return ctx.finish(out, [a, b, out, sa, sb, hw]() {
    const T* og = out.grad->data();
    for (int n = 0; n < sa.n; ++n) {
      const T* src = og + std::int64_t(n) * (sa.c + sb.c) * hw;
      if (a.grad) {
        T* ga = a.grad->data() + std::int64_t(n) * sa.c * hw;
        for (std::int64_t i = 0; i < sa.c * hw; ++i) ga[i] += src[i];
      }
      if (b.grad) {
        T* gb = b.grad->data() + std::int64_t(n) * sb.c * hw;
        for (std::int64_t i = 0; i < sb.c * hw; ++i) gb[i] += src[sa.c * hw + i];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int first, int count) {
  check_defined(a, "slice_channels");
  const Shape sa = a.shape;
  if (first < 0 || count < 1 || first + count > sa.c)
    throw ConfigError("slice_channels: range [" + std::to_string(first) + "," +
                      std::to_string(first + count) + ") out of " +
                      std::to_string(sa.c) + " channels");
  Tensor<T> out = Tensor<T>::zeros(Shape{sa.n, count, sa.h, sa.w});
  const std::int64_t hw = std::int64_t(sa.h) * sa.w;
  for (int n = 0; n < sa.n; ++n)
    std::copy_n(a.data->data() + (std::int64_t(n) * sa.c + first) * hw, count * hw,
                out.data->data() + std::int64_t(n) * count * hw);
  OpContext<T> ctx;
  ctx.add_input(a);
  ctx.prepare(out);
  return ctx.finish(out, [a, out, sa, first, count, hw]() {
    if (!a.grad) return;
    const T* og = out.grad->data();
    for (int n = 0; n < sa.n; ++n) {
      T* ga = a.grad->data() + (std::int64_t(n) * sa.c + first) * hw;
      const T* src = og + std::int64_t(n) * count * hw;
      for (std::int64_t i = 0; i < count * hw; ++i) ga[i] += src[i];
    }
  });
}

template <typename T>
Tensor<T> avgpool2x(const Tensor<T>& input) {
  check_defined(input, "avgpool2x");
  const Shape s = input.shape;
  if (s.h % 2 != 0 || s.w % 2 != 0)
    throw ConfigError("avgpool2x: spatial extents must be even, got " + s.str());
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, s.c, s.h / 2, s.w / 2});
  const std::int64_t planes = std::int64_t(s.n) * s.c;
  const T* pi = input.data->data();
  T* po = out.data->data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* ip = pi + p * s.h * s.w;
    T* op = po + p * (s.h / 2) * (s.w / 2);
    for (int y = 0; y < s.h / 2; ++y) {
      const T* r0 = ip + std::int64_t(2 * y) * s.w;
      const T* r1 = r0 + s.w;
      for (int x = 0; x < s.w / 2; ++x)
        op[std::int64_t(y) * (s.w / 2) + x] =
            (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * T(0.25);
    }
  }
  OpContext<T> ctx;
  ctx.add_input(input);
  ctx.prepare(out);
  return ctx.finish(out, [input, out, s, planes]() {
    if (!input.grad) return;
    const T* og = out.grad->data();
    T* gi = input.grad->data();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* op = og + p * (s.h / 2) * (s.w / 2);
      T* ip = gi + p * s.h * s.w;
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          ip[std::int64_t(y) * s.w + x] +=
              op[std::int64_t(y / 2) * (s.w / 2) + x / 2] * T(0.25);
    }
  });
}

template <typename T>
Tensor<T> channel_mean(const Tensor<T>& input) {
  check_defined(input, "channel_mean");
  const Shape s = input.shape;
  Tensor<T> out = Tensor<T>::zeros(Shape{s.n, 1, s.h, s.w});
  const std::int64_t hw = std::int64_t(s.h) * s.w;
  const T* pi = input.data->data();
  T* po = out.data->data();
  for (int n = 0; n < s.n; ++n) {
    T* op = po + std::int64_t(n) * hw;
    for (int c = 0; c < s.c; ++c) {
      const T* ip = pi + (std::int64_t(n) * s.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) op[i] += ip[i];
    }
    for (std::int64_t i = 0; i < hw; ++i) op[i] /= T(s.c);
  }
  OpContext<T> ctx;
  ctx.add_input(input);
  ctx.prepare(out);
  return ctx.finish(out, [input, out, s, hw]() {
    if (!input.grad) return;
    const T* og = out.grad->data();
    T* gi = input.grad->data();
    for (int n = 0; n < s.n; ++n) {
      const T* op = og + std::int64_t(n) * hw;
      for (int c = 0; c < s.c; ++c) {
        T* ip = gi + (std::int64_t(n) * s.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) ip[i] += op[i] / T(s.c);
      }
    }
  });
}

#define PD_INSTANTIATE_OPS(T)                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> add(const Tensor<T>&, T);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sub(const Tensor<T>&, T);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                   \
  template Tensor<T> abs(const Tensor<T>&);                                        \
  template Tensor<T> exp(const Tensor<T>&);                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                    \
  template Tensor<T> elu(const Tensor<T>&);                                        \
  template Tensor<T> reduce_mean(const Tensor<T>&, Reduce);                        \
  template Tensor<T> reduce_sum(const Tensor<T>&);                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                            int, int);                                             \
  template Tensor<T> nn_upsample2x(const Tensor<T>&);                              \
  template Tensor<T> upsample2x_conv(const Tensor<T>&, const Tensor<T>&,           \
                                     const Tensor<T>&);                            \
  template Tensor<T> horizontal_bilinear_sample(const Tensor<T>&,                  \
                                                const Tensor<T>&);                 \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                   \
  template Tensor<T> avgpool2x(const Tensor<T>&);                                  \
  template Tensor<T> channel_mean(const Tensor<T>&);

PD_INSTANTIATE_OPS(float)
PD_INSTANTIATE_OPS(double)

}  // namespace pd
