#include "pd/gradcheck.hpp"

#include <cmath>
#include <random>

#include "pd/data.hpp"
#include "pd/losses.hpp"

namespace pd {

namespace {

template <typename T>
T rel_error(T analytic, T numeric) {
  const T denom = std::max(std::max(std::fabs(analytic), std::fabs(numeric)), T(1e-8));
  return std::fabs(analytic - numeric) / denom;
}

}  // namespace

template <typename T>
T finite_difference_check(
    const std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>& f,
    const Tensor<T>& x0, T step) {
  Tensor<T> x = x0.clone();

  std::vector<T> analytic;
  {
    Tape<T> tape;
    tape.watch(x);
    Tensor<T> y = f(tape, x);
    tape.backward(y);
    analytic = *x.grad;
  }
  unwatch(x);

  T max_rel = T(0);
  std::vector<T>& v = *x.data;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T orig = v[i];
    v[i] = orig + step;
    Tape<T> tp;
    const T fp = f(tp, x).item();
    v[i] = orig - step;
    Tape<T> tm;
    const T fm = f(tm, x).item();
    v[i] = orig;
    const T numeric = (fp - fm) / (2 * step);
    max_rel = std::max(max_rel, rel_error(analytic[i], numeric));
  }
  return max_rel;
}

template <typename T>
T finite_difference_check_many(const std::function<Tensor<T>(Tape<T>&)>& f,
                               const std::vector<Tensor<T>*>& params, T step) {
  std::vector<std::vector<T>> analytic;
  {
    Tape<T> tape;
    for (Tensor<T>* p : params) tape.watch(*p);
    Tensor<T> y = f(tape);
    tape.backward(y);
    for (Tensor<T>* p : params) analytic.push_back(*p->grad);
  }
  for (Tensor<T>* p : params) unwatch(*p);

  T max_rel = T(0);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<T>& v = *params[pi]->data;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const T orig = v[i];
      v[i] = orig + step;
      Tape<T> tp;
      const T fp = f(tp).item();
      v[i] = orig - step;
      Tape<T> tm;
      const T fm = f(tm).item();
      v[i] = orig;
      const T numeric = (fp - fm) / (2 * step);
      max_rel = std::max(max_rel, rel_error(analytic[pi][i], numeric));
    }
  }
  return max_rel;
}

template float finite_difference_check(
    const std::function<Tensorf(Tape<float>&, const Tensorf&)>&, const Tensorf&, float);
template double finite_difference_check(
    const std::function<Tensord(Tape<double>&, const Tensord&)>&, const Tensord&, double);
template float finite_difference_check_many(
    const std::function<Tensorf(Tape<float>&)>&, const std::vector<Tensorf*>&, float);
template double finite_difference_check_many(
    const std::function<Tensord(Tape<double>&)>&, const std::vector<Tensord*>&, double);

namespace {

// values on a fractional lattice: random integer part plus an offset drawn
// from {0.3, 0.7}, keeping every coordinate >= 0.2 away from the bilinear
// kinks at whole pixels
Tensord fractional_field(Shape s, double lo, double hi, std::mt19937_64& g) {
  Tensord t = Tensord::zeros(s);
  std::uniform_int_distribution<int> whole(int(lo), std::max(int(lo), int(hi) - 1));
  std::bernoulli_distribution coin(0.5);
  for (auto& v : *t.data) v = double(whole(g)) + (coin(g) ? 0.3 : 0.7);
  return t;
}

Tensord uniform_field(Shape s, double lo, double hi, std::mt19937_64& g) {
  Tensord t = Tensord::zeros(s);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : *t.data) v = dist(g);
  return t;
}

}  // namespace

std::vector<GradCheckResult> gradient_suite(std::uint64_t seed, double step) {
  std::mt19937_64 g(seed);
  std::vector<GradCheckResult> out;
  auto record = [&](const std::string& name, double err) {
    out.push_back({name, err});
  };

  {
    Tensord x = uniform_field({1, 2, 6, 7}, -1.0, 1.0, g);
    Tensord k = uniform_field({3, 2, 3, 3}, -0.6, 0.6, g);
    Tensord b = uniform_field({1, 3, 1, 1}, -0.2, 0.2, g);
    auto f = [&](Taped&) { return reduce_mean(exp(conv2d(x, k, b, 1, 1))); };
    record("conv2d", finite_difference_check_many<double>(f, {&x, &k, &b}, step));
    auto f2 = [&](Taped&) { return reduce_mean(exp(conv2d(x, k, b, 2, 1))); };
    record("conv2d_stride2",
           finite_difference_check_many<double>(f2, {&x, &k, &b}, step));
  }
  {
    Tensord x = uniform_field({1, 2, 3, 4}, -1.0, 1.0, g);
    auto f = [&](Taped&) { return reduce_mean(exp(nn_upsample2x(x))); };
    record("nn_upsample2x", finite_difference_check_many<double>(f, {&x}, step));
  }
  {
    Tensord x = uniform_field({1, 2, 3, 4}, -1.0, 1.0, g);
    Tensord k = uniform_field({2, 2, 3, 3}, -0.6, 0.6, g);
    Tensord b = uniform_field({1, 2, 1, 1}, -0.2, 0.2, g);
    auto f = [&](Taped&) { return reduce_mean(exp(upsample2x_conv(x, k, b))); };
    record("upsample2x_conv",
           finite_difference_check_many<double>(f, {&x, &k, &b}, step));
  }
  {
    Tensord src = uniform_field({1, 1, 4, 9}, 0.1, 1.0, g);
    Tensord xc = fractional_field({1, 1, 4, 9}, 0, 8, g);
    auto f = [&](Taped&) {
      return reduce_mean(exp(horizontal_bilinear_sample(src, xc)));
    };
    record("bilinear_sampler",
           finite_difference_check_many<double>(f, {&src, &xc}, step));
  }

  StereoSample<double> scene = gen_textured_scene<double>(
      32, 16, TextureSpec{}, DisparitySpec::constant(2.3), seed ^ 0x5cee);
  {
    Tensord dl = fractional_field({1, 1, 16, 32}, 1, 3, g);
    Tensord dr = fractional_field({1, 1, 16, 32}, 1, 3, g);
    Tensord il = scene.left.clone(), ir = scene.right.clone();
    auto f = [&](Taped&) {
      return patch_matching_loss(il, ir, DisparityMap<double>{dl, Side::left},
                                 DisparityMap<double>{dr, Side::right}, 5)
          .first;
    };
    record("patch_matching",
           finite_difference_check_many<double>(f, {&dl, &dr, &il, &ir}, step));
  }
  {
    // the |.| kink sits at zero residual; keep every gap >= 0.1
    Tensord target = uniform_field({1, 3, 4, 6}, 0.1, 0.9, g);
    Tensord recon = target.clone();
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> gap(0.1, 0.4);
    for (auto& v : *recon.data) v += (coin(g) ? 1 : -1) * gap(g);
    auto f = [&](Taped&) { return view_reconstruction_loss(target, recon); };
    record("view_reconstruction",
           finite_difference_check_many<double>(f, {&target, &recon}, step));
  }
  {
    Tensord dv = uniform_field({1, 1, 4, 5}, 0.5, 3.0, g);
    Tensord img = uniform_field({1, 3, 4, 5}, 0.0, 1.0, g);
    auto f = [&](Taped&) {
      return disparity_smoothness_loss(DisparityMap<double>{dv, Side::left}, img);
    };
    record("smoothness", finite_difference_check_many<double>(f, {&dv, &img}, step));
  }
  {
    Tensord dl = uniform_field({1, 1, 3, 8}, 0.3, 2.7, g);
    Tensord dr = uniform_field({1, 1, 3, 8}, 0.3, 2.7, g);
    auto f = [&](Taped&) {
      return disparity_consistency_loss(DisparityMap<double>{dl, Side::left},
                                        DisparityMap<double>{dr, Side::right});
    };
    record("consistency", finite_difference_check_many<double>(f, {&dl, &dr}, step));
  }
  {
    Tensord tv = uniform_field({1, 1, 3, 5}, 0.1, 0.9, g);
    Tensord pv = tv.clone();
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> gap(0.05, 0.1);
    for (auto& v : *pv.data) v += (coin(g) ? 1 : -1) * gap(g);
    ConfidenceMap<double> target{tv};
    auto f = [&](Taped&) {
      return confidence_loss(target, ConfidenceMap<double>{pv});
    };
    record("confidence", finite_difference_check_many<double>(f, {&pv}, step));
  }
  {
    // full objective on the toy scene, gradients through all 8 pyramid leaves
    DisparityPyramid<double> pyr;
    std::vector<Tensord*> leaves;
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int i = 0; i < kPyramidScales; ++i) {
      const int down = 1 << (3 - i);
      const Shape sh{1, 1, 16 / down, 32 / down};
      pyr.left[i] = {fractional_field(sh, 0, 2, g), Side::left};
      pyr.right[i] = {fractional_field(sh, 0, 2, g), Side::right};
      // continuous jitter kills the exact ties the lattice would feed into
      // the absolute-value terms while staying 0.25 px from sampling kinks
      for (auto& v : *pyr.left[i].values.data) v += jitter(g);
      for (auto& v : *pyr.right[i].values.data) v += jitter(g);
      leaves.push_back(&pyr.left[i].values);
      leaves.push_back(&pyr.right[i].values);
    }
    auto f = [&](Taped&) {
      return total_loss(scene.left, scene.right, pyr, LossWeights{}).l_total;
    };
    record("total_loss", finite_difference_check_many<double>(f, leaves, step));
  }
  return out;
}

}  // namespace pd
