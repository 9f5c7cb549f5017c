#include "pd/losses.hpp"

#include <cmath>
#include <string>

namespace pd {

void LossWeights::validate() const {
  for (double w : {w_p, w_v, w_d, w_c}) {
    if (!(w >= 0) || !std::isfinite(w))
      throw ConfigError("LossWeights: weights must be finite and nonnegative");
  }
}

namespace {

constexpr double kZnccEps = 1e-8;

// 1 - (1+z)/2 == (1-z)/2
template <typename T>
Tensor<T> invert_similarity(const Tensor<T>& z) {
  return scale(add(scale(z, T(-1)), T(1)), T(0.5));
}

// Per-image sum over pixels/channels, averaged across the batch; the
// paper_sum aggregation.
template <typename T>
Tensor<T> batch_mean_sum(const Tensor<T>& t) {
  return scale(reduce_sum(t), T(1) / T(t.shape.n));
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& per_pixel, LossMode mode) {
  return mode == LossMode::mean ? reduce_mean(per_pixel, Reduce::all)
                                : batch_mean_sum(per_pixel);
}

}  // namespace

template <typename T>
Tensor<T> zncc(const PatchSet<T>& left_patches, const PatchSet<T>& right_patches) {
  const Tensor<T>& l = left_patches.patches;
  const Tensor<T>& r = right_patches.patches;
  if (left_patches.window_n != right_patches.window_n)
    throw ConfigError("zncc: window mismatch, " + std::to_string(left_patches.window_n) +
                      " vs " + std::to_string(right_patches.window_n));
  if (!(l.shape == r.shape))
    throw ConfigError("zncc: patch shape mismatch " + l.shape.str() + " vs " +
                      r.shape.str());

  const Shape s = l.shape;
  const int N = s.n, E = s.c, H = s.h, W = s.w;
  const std::int64_t HW = std::int64_t(H) * W;
  Tensor<T> out = Tensor<T>::zeros({N, 1, H, W});

  // Plane sweeps over the element dimension keep every pass sequential.
  const T invE = T(1) / T(E);
  const T* pl = l.data->data();
  const T* pr = r.data->data();
  T* po = out.data->data();
  std::vector<T> ml(HW), mr(HW), U(HW), V(HW), S(HW);
  for (int b = 0; b < N; ++b) {
    const T* lb = pl + std::int64_t(b) * E * HW;
    const T* rb = pr + std::int64_t(b) * E * HW;
    std::fill(ml.begin(), ml.end(), T(0));
    std::fill(mr.begin(), mr.end(), T(0));
    std::fill(U.begin(), U.end(), T(0));
    std::fill(V.begin(), V.end(), T(0));
    std::fill(S.begin(), S.end(), T(0));
    for (int k = 0; k < E; ++k) {
      const T* lk = lb + std::int64_t(k) * HW;
      const T* rk = rb + std::int64_t(k) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        ml[i] += lk[i];
        mr[i] += rk[i];
      }
    }
    for (std::int64_t i = 0; i < HW; ++i) {
      ml[i] *= invE;
      mr[i] *= invE;
    }
    for (int k = 0; k < E; ++k) {
      const T* lk = lb + std::int64_t(k) * HW;
      const T* rk = rb + std::int64_t(k) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        const T a = lk[i] - ml[i];
        const T c = rk[i] - mr[i];
        U[i] += a * a;
        V[i] += c * c;
        S[i] += a * c;
      }
    }
    T* ob = po + std::int64_t(b) * HW;
    for (std::int64_t i = 0; i < HW; ++i)
      ob[i] = S[i] / std::sqrt(U[i] * V[i] + T(kZnccEps));
  }

  OpContext<T> ctx;
  ctx.add_input(l);
  ctx.add_input(r);
  ctx.prepare(out);
  return ctx.finish(out, [l, r, out, N, E, H, W, HW, invE]() {
    const T* pl = l.data->data();
    const T* pr = r.data->data();
    const T* og = out.grad->data();
    T* gl = l.grad ? l.grad->data() : nullptr;
    T* gr = r.grad ? r.grad->data() : nullptr;
    if (!gl && !gr) return;
    std::vector<T> ml(HW), mr(HW), U(HW), V(HW), S(HW), cl(HW), crl(HW), clr(HW), cr(HW);
    for (int b = 0; b < N; ++b) {
      const T* lb = pl + std::int64_t(b) * E * HW;
      const T* rb = pr + std::int64_t(b) * E * HW;
      std::fill(ml.begin(), ml.end(), T(0));
      std::fill(mr.begin(), mr.end(), T(0));
      std::fill(U.begin(), U.end(), T(0));
      std::fill(V.begin(), V.end(), T(0));
      std::fill(S.begin(), S.end(), T(0));
      for (int k = 0; k < E; ++k) {
        const T* lk = lb + std::int64_t(k) * HW;
        const T* rk = rb + std::int64_t(k) * HW;
        for (std::int64_t i = 0; i < HW; ++i) {
          ml[i] += lk[i];
          mr[i] += rk[i];
        }
      }
      for (std::int64_t i = 0; i < HW; ++i) {
        ml[i] *= invE;
        mr[i] *= invE;
      }
      for (int k = 0; k < E; ++k) {
        const T* lk = lb + std::int64_t(k) * HW;
        const T* rk = rb + std::int64_t(k) * HW;
        for (std::int64_t i = 0; i < HW; ++i) {
          const T a = lk[i] - ml[i];
          const T c = rk[i] - mr[i];
          U[i] += a * a;
          V[i] += c * c;
          S[i] += a * c;
        }
      }
      // dz/dl_k = b_k/D - (S*V/D^3) a_k ; dz/dr_k = a_k/D - (S*U/D^3) b_k.
      // The mean-projection terms vanish because the deviations sum to zero.
      const T* gb = og + std::int64_t(b) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        const T D2 = U[i] * V[i] + T(kZnccEps);
        const T D = std::sqrt(D2);
        const T D3 = D2 * D;
        cl[i] = gb[i] / D;                    // coefficient on b_k for grad_l
        crl[i] = gb[i] * S[i] * V[i] / D3;    // coefficient on a_k for grad_l
        cr[i] = gb[i] / D;                    // coefficient on a_k for grad_r
        clr[i] = gb[i] * S[i] * U[i] / D3;    // coefficient on b_k for grad_r
      }
      for (int k = 0; k < E; ++k) {
        const T* lk = lb + std::int64_t(k) * HW;
        const T* rk = rb + std::int64_t(k) * HW;
        T* glk = gl ? gl + (std::int64_t(b) * E + k) * HW : nullptr;
        T* grk = gr ? gr + (std::int64_t(b) * E + k) * HW : nullptr;
        for (std::int64_t i = 0; i < HW; ++i) {
          const T a = lk[i] - ml[i];
          const T c = rk[i] - mr[i];
          if (glk) glk[i] += cl[i] * c - crl[i] * a;
          if (grk) grk[i] += cr[i] * a - clr[i] * c;
        }
      }
    }
  });
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> patch_matching_loss(
    const Tensor<T>& I_l, const Tensor<T>& I_r, const DisparityMap<T>& d_l,
    const DisparityMap<T>& d_r, int window_n, LossMode mode) {
  if (d_l.side != Side::left || d_r.side != Side::right)
    throw ConfigError("patch_matching_loss: maps must be (left, right) referenced");
  Tensor<T> il = channel_mean(I_l);
  Tensor<T> ir = channel_mean(I_r);

  PatchSet<T> pl = sample_patches(il, window_n);
  PatchSet<T> pr_at_l = sample_patches(ir, &d_l, window_n);
  Tensor<T> pm_left = invert_similarity(zncc(pl, pr_at_l));

  PatchSet<T> pr = sample_patches(ir, window_n);
  PatchSet<T> pl_at_r = sample_patches(il, &d_r, window_n);
  Tensor<T> pm_right = invert_similarity(zncc(pr, pl_at_r));

  Tensor<T> pm_map = scale(add(pm_left, pm_right), T(0.5));
  return {aggregate(pm_map, mode), pm_map};
}

template <typename T>
Tensor<T> view_reconstruction_loss(const Tensor<T>& I_target,
                                   const Tensor<T>& I_reconstructed, LossMode mode) {
  if (!(I_target.shape == I_reconstructed.shape))
    throw ConfigError("view_reconstruction_loss: shape mismatch " +
                      I_target.shape.str() + " vs " + I_reconstructed.shape.str());
  return aggregate(abs(sub(I_reconstructed, I_target)), mode);
}

template <typename T>
Tensor<T> disparity_smoothness_loss(const DisparityMap<T>& dmap, const Tensor<T>& I) {
  const Tensor<T>& d = dmap.values;
  const Shape ds = d.shape, is = I.shape;
  if (ds.n != is.n || ds.h != is.h || ds.w != is.w)
    throw ConfigError("disparity_smoothness_loss: disparity " + ds.str() +
                      " does not match image " + is.str());
  const int N = ds.n, C = is.c, H = ds.h, W = ds.w;
  const std::int64_t HW = std::int64_t(H) * W;
  const T norm = T(1) / (T(N) * T(HW));
  const T invC = T(1) / T(C);

  const T* pd_ = d.data->data();
  const T* pi = I.data->data();
  T acc = T(0);
  for (int b = 0; b < N; ++b) {
    const T* db = pd_ + std::int64_t(b) * HW;
    const T* ib = pi + std::int64_t(b) * C * HW;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::int64_t at = std::int64_t(y) * W + x;
        if (x + 1 < W) {
          T mg = T(0);
          for (int c = 0; c < C; ++c)
            mg += std::fabs(ib[c * HW + at + 1] - ib[c * HW + at]);
          acc += std::fabs(db[at + 1] - db[at]) * std::exp(-mg * invC);
        }
        if (y + 1 < H) {
          T mg = T(0);
          for (int c = 0; c < C; ++c)
            mg += std::fabs(ib[c * HW + at + W] - ib[c * HW + at]);
          acc += std::fabs(db[at + W] - db[at]) * std::exp(-mg * invC);
        }
      }
    }
  }
  Tensor<T> out = Tensor<T>::scalar(acc * norm);

  OpContext<T> ctx;
  ctx.add_input(d);
  ctx.add_input(I);
  ctx.prepare(out);
  return ctx.finish(out, [d, I, out, N, C, H, W, HW, norm, invC]() {
    const T g = (*out.grad)[0];
    if (g == T(0)) return;
    const T* pd_ = d.data->data();
    const T* pi = I.data->data();
    T* gd = d.grad ? d.grad->data() : nullptr;
    T* gi = I.grad ? I.grad->data() : nullptr;
    if (!gd && !gi) return;
    const T w = g * norm;
    auto sgn = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
    for (int b = 0; b < N; ++b) {
      const T* db = pd_ + std::int64_t(b) * HW;
      const T* ib = pi + std::int64_t(b) * C * HW;
      T* gdb = gd ? gd + std::int64_t(b) * HW : nullptr;
      T* gib = gi ? gi + std::int64_t(b) * C * HW : nullptr;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const std::int64_t at = std::int64_t(y) * W + x;
          for (int pass = 0; pass < 2; ++pass) {
            const std::int64_t step = pass == 0 ? 1 : W;
            if (pass == 0 && x + 1 >= W) continue;
            if (pass == 1 && y + 1 >= H) continue;
            T mg = T(0);
            for (int c = 0; c < C; ++c)
              mg += std::fabs(ib[c * HW + at + step] - ib[c * HW + at]);
            const T e = std::exp(-mg * invC);
            const T dd = db[at + step] - db[at];
            if (gdb) {
              const T t = w * sgn(dd) * e;
              gdb[at] -= t;
              gdb[at + step] += t;
            }
            if (gib) {
              const T t0 = w * std::fabs(dd) * e * invC;
              for (int c = 0; c < C; ++c) {
                const T sg = sgn(ib[c * HW + at + step] - ib[c * HW + at]);
                gib[c * HW + at] += t0 * sg;
                gib[c * HW + at + step] -= t0 * sg;
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> disparity_consistency_loss(const DisparityMap<T>& d_l,
                                     const DisparityMap<T>& d_r) {
  if (d_l.side != Side::left || d_r.side != Side::right)
    throw ConfigError("disparity_consistency_loss: maps must be (left, right) referenced");
  if (!(d_l.values.shape == d_r.values.shape))
    throw ConfigError("disparity_consistency_loss: shape mismatch " +
                      d_l.values.shape.str() + " vs " + d_r.values.shape.str());
  Tensor<T> base = x_coordinate_ramp<T>(d_l.values.shape);

  Tensor<T> r_at_l = horizontal_bilinear_sample(d_r.values, sub(base, d_l.values));
  Tensor<T> la = reduce_mean(abs(sub(d_l.values, r_at_l)), Reduce::all);

  Tensor<T> l_at_r = horizontal_bilinear_sample(d_l.values, add(base, d_r.values));
  Tensor<T> ra = reduce_mean(abs(sub(d_r.values, l_at_r)), Reduce::all);

  return scale(add(la, ra), T(0.5));
}

template <typename T>
LossBreakdown<T> total_loss(const Tensor<T>& I_l, const Tensor<T>& I_r,
                            const DisparityPyramid<T>& pyramid,
                            const LossWeights& weights,
                            const std::array<int, 4>& patch_sizes, LossMode mode) {
  weights.validate();
  if (!(I_l.shape == I_r.shape))
    throw ConfigError("total_loss: image shapes differ, " + I_l.shape.str() + " vs " +
                      I_r.shape.str());

  // image pyramid, coarse to fine
  std::array<Tensor<T>, 4> left_img, right_img;
  left_img[3] = I_l;
  right_img[3] = I_r;
  for (int i = 2; i >= 0; --i) {
    left_img[i] = avgpool2x(left_img[i + 1]);
    right_img[i] = avgpool2x(right_img[i + 1]);
  }

  Tensor<T> l_pm, l_vr, l_ds, l_dc, pm_map_full;
  for (int i = 0; i < kPyramidScales; ++i) {
    const DisparityMap<T>& dl = pyramid.left[i];
    const DisparityMap<T>& dr = pyramid.right[i];
    const Shape want = left_img[i].shape;
    if (dl.values.shape.h != want.h || dl.values.shape.w != want.w ||
        dl.values.shape.n != want.n)
      throw ConfigError("total_loss: pyramid scale " + std::to_string(i) +
                        " disparity " + dl.values.shape.str() +
                        " does not match image " + want.str());
    if (dl.side != Side::left || dr.side != Side::right)
      throw ConfigError("total_loss: pyramid sides are swapped at scale " +
                        std::to_string(i));

    auto [pm, pm_map] =
        patch_matching_loss(left_img[i], right_img[i], dl, dr, patch_sizes[i], mode);
    if (i == kPyramidScales - 1) pm_map_full = pm_map;

    Tensor<T> recon_l = warp_reconstruct(right_img[i], dl, WarpDir::reconstruct_left);
    Tensor<T> recon_r = warp_reconstruct(left_img[i], dr, WarpDir::reconstruct_right);
    Tensor<T> vr = scale(add(view_reconstruction_loss(left_img[i], recon_l, mode),
                             view_reconstruction_loss(right_img[i], recon_r, mode)),
                         T(0.5));

    Tensor<T> ds = scale(add(disparity_smoothness_loss(dl, left_img[i]),
                             disparity_smoothness_loss(dr, right_img[i])),
                         T(0.5));

    Tensor<T> dc = disparity_consistency_loss(dl, dr);

    l_pm = i == 0 ? pm : add(l_pm, pm);
    l_vr = i == 0 ? vr : add(l_vr, vr);
    l_ds = i == 0 ? ds : add(l_ds, ds);
    l_dc = i == 0 ? dc : add(l_dc, dc);
  }
  const T inv_scales = T(1) / T(kPyramidScales);
  LossBreakdown<T> out;
  out.l_pm = scale(l_pm, inv_scales);
  out.l_vr = scale(l_vr, inv_scales);
  out.l_ds = scale(l_ds, inv_scales);
  out.l_dc = scale(l_dc, inv_scales);
  out.pm_map = pm_map_full;
  out.l_total = add(add(scale(out.l_pm, T(weights.w_p)), scale(out.l_vr, T(weights.w_v))),
                    add(scale(out.l_ds, T(weights.w_d)), scale(out.l_dc, T(weights.w_c))));
  return out;
}

template <typename T>
ConfidenceMap<T> confidence_target(const Tensor<T>& pm_map) {
  Tensor<T> flat = pm_map.detach();
  // untaped inputs record nothing: this stays a static copy
  return ConfidenceMap<T>{add(scale(flat, T(-1)), T(1))};
}

template <typename T>
Tensor<T> confidence_loss(const ConfidenceMap<T>& target,
                          const ConfidenceMap<T>& predicted) {
  if (!(target.values.shape == predicted.values.shape))
    throw ConfigError("confidence_loss: shape mismatch " + target.values.shape.str() +
                      " vs " + predicted.values.shape.str());
  return reduce_mean(abs(sub(predicted.values, target.values)), Reduce::all);
}

#define PD_INSTANTIATE_LOSSES(T)                                                       \
  template Tensor<T> zncc<T>(const PatchSet<T>&, const PatchSet<T>&);                 \
  template std::pair<Tensor<T>, Tensor<T>> patch_matching_loss<T>(                    \
      const Tensor<T>&, const Tensor<T>&, const DisparityMap<T>&,                     \
      const DisparityMap<T>&, int, LossMode);                                         \
  template Tensor<T> view_reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&,  \
                                                 LossMode);                           \
  template Tensor<T> disparity_smoothness_loss<T>(const DisparityMap<T>&,             \
                                                  const Tensor<T>&);                  \
  template Tensor<T> disparity_consistency_loss<T>(const DisparityMap<T>&,            \
                                                   const DisparityMap<T>&);           \
  template LossBreakdown<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&,         \
                                          const DisparityPyramid<T>&,                 \
                                          const LossWeights&, const std::array<int, 4>&, \
                                          LossMode);                                  \
  template ConfidenceMap<T> confidence_target<T>(const Tensor<T>&);                   \
  template Tensor<T> confidence_loss<T>(const ConfidenceMap<T>&, const ConfidenceMap<T>&);

PD_INSTANTIATE_LOSSES(float)
PD_INSTANTIATE_LOSSES(double)

}  // namespace pd
