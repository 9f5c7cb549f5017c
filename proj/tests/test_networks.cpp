#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pd/data.hpp"
#include "pd/gradcheck.hpp"
#include "pd/networks.hpp"
#include "testutil.hpp"

using namespace pd;
using testutil::rng;

namespace {

std::string tmp_path(const std::string& name) {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / "pd_net_tests";
    std::filesystem::create_directories(d);
    return d;
  }();
  return (dir / name).string();
}

template <typename T>
bool stores_equal(const ParamStore<T>& a, const ParamStore<T>& b) {
  if (a.entries.size() != b.entries.size() || a.step != b.step) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& x = a.entries[i];
    const auto& y = b.entries[i];
    if (x.name != y.name || !(x.value.shape == y.value.shape)) return false;
    const auto bytes = [](const std::vector<T>& u, const std::vector<T>& w) {
      return std::memcmp(u.data(), w.data(), u.size() * sizeof(T)) == 0;
    };
    if (!bytes(*x.value.data, *y.value.data) || !bytes(x.m, y.m) || !bytes(x.v, y.v))
      return false;
  }
  return true;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

// tiny net for architecture-edge tests: bottleneck at 1/8, head8 reads it
DepthNetConfig depth3_config() {
  DepthNetConfig c;
  c.encoder_depth = 3;
  c.base_channels = 8;
  c.max_channels = 32;
  c.kernel_sizes = {3, 3, 3};
  return c;
}

}  // namespace

TEST(ParamStore, AddLookupAndErrors) {
  ParamStore<float> p;
  p.add("a.w", {4, 3, 3, 3});
  p.add("a.b", {1, 4, 1, 1});
  EXPECT_EQ(p.scalar_count(), 4 * 3 * 3 * 3 + 4);
  EXPECT_TRUE(p.has("a.w"));
  EXPECT_FALSE(p.has("a.missing"));
  EXPECT_TRUE(p["a.b"].shape == Shape({1, 4, 1, 1}));
  EXPECT_THROW(p.add("a.w", {1, 1, 1, 1}), ConfigError);
  EXPECT_THROW(p["nope"], ConfigError);
}

TEST(Init, DeterministicPerSeed) {
  ParamStore<float> a = init_depthnet<float>(DepthNetConfig::toy(), 7);
  ParamStore<float> b = init_depthnet<float>(DepthNetConfig::toy(), 7);
  ParamStore<float> c = init_depthnet<float>(DepthNetConfig::toy(), 8);
  EXPECT_TRUE(stores_equal(a, b));
  EXPECT_FALSE(stores_equal(a, c));
}

TEST(Init, HeVarianceAndZeroBiases) {
  ParamStore<double> p = init_depthnet<double>(DepthNetConfig::paper(), 11);
  // a large kernel: 128x64x3x3 = 73728 draws, fan_in = 64*9 = 576
  const Tensord& k = p.at("enc3.a.w");
  ASSERT_GT(k.numel(), 10000);
  const double fan_in = double(k.shape.c) * k.shape.h * k.shape.w;
  double sum = 0, sq = 0;
  for (double v : *k.data) {
    sum += v;
    sq += v * v;
  }
  const double var = sq / k.numel() - (sum / k.numel()) * (sum / k.numel());
  EXPECT_NEAR(var, 2.0 / fan_in, 0.2 * 2.0 / fan_in);

  for (const auto& e : p.entries) {
    if (e.name.size() < 2 || e.name.substr(e.name.size() - 2) != ".b") continue;
    for (double v : *e.value.data) ASSERT_EQ(v, 0.0);
  }
}

TEST(DepthNet, PaperPresetShapeContract) {
  DepthNetConfig cfg = DepthNetConfig::paper();
  // 512 channels at the bottleneck; 512x256 shrinks to 4x2 after 7 halvings
  ParamStore<float> p = init_depthnet<float>(cfg, 3);
  EXPECT_TRUE(p.at("enc7.a.w").shape == Shape({512, 512, 3, 3}));
  EXPECT_EQ(512 >> 7, 4);
  EXPECT_EQ(256 >> 7, 2);

  Tensorf img = Tensorf::full({1, 3, 256, 512}, 0.5f);
  DisparityPyramid<float> pyr = depthnet_forward(img, p, cfg);
  const int ws[4] = {64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    EXPECT_TRUE(pyr.left[s].values.shape == Shape({1, 1, ws[s] / 2, ws[s]}));
    EXPECT_TRUE(pyr.right[s].values.shape == Shape({1, 1, ws[s] / 2, ws[s]}));
    EXPECT_EQ(pyr.left[s].side, Side::left);
    EXPECT_EQ(pyr.right[s].side, Side::right);
  }
}

TEST(DepthNet, OutputsStrictlyInsideDisparityRange) {
  DepthNetConfig cfg = DepthNetConfig::toy();
  ParamStore<float> p = init_depthnet<float>(cfg, 21);
  auto g = rng(22);
  Tensorf img = testutil::random_tensor<float>({2, 3, 32, 64}, g, 0.0f, 1.0f);
  DisparityPyramid<float> pyr = depthnet_forward(img, p, cfg);
  for (int s = 0; s < 4; ++s) {
    const float d_max = 0.3f * float(64 >> (3 - s));
    for (const DisparityMap<float>* m : {&pyr.left[s], &pyr.right[s]})
      for (float v : *m->values.data) {
        ASSERT_GT(v, 0.0f);
        ASSERT_LT(v, d_max);
      }
  }
}

TEST(DepthNet, ToyForwardBackwardGivesFiniteGrads) {
  DepthNetConfig cfg = DepthNetConfig::toy();
  ParamStore<double> p = init_depthnet<double>(cfg, 31);
  auto g = rng(32);
  Tensord img = testutil::random_tensor<double>({1, 3, 32, 64}, g, 0.0, 1.0);

  Taped tape;
  p.watch_all(tape);
  DisparityPyramid<double> pyr = depthnet_forward(img, p, cfg);
  Tensord loss = Tensord::zeros({1, 1, 1, 1});
  for (int s = 0; s < 4; ++s)
    loss = add(loss, add(reduce_mean(pyr.left[s].values, Reduce::all),
                         reduce_mean(pyr.right[s].values, Reduce::all)));
  tape.backward(loss);
  for (const auto& e : p.entries) {
    ASSERT_TRUE(e.value.grad != nullptr) << e.name;
    for (double gv : *e.value.grad) ASSERT_TRUE(std::isfinite(gv)) << e.name;
  }
  p.unwatch_all();
  for (const auto& e : p.entries) EXPECT_TRUE(e.value.grad == nullptr);
}

TEST(DepthNet, IndivisibleExtentsRejected) {
  DepthNetConfig cfg = DepthNetConfig::toy();  // needs multiples of 16
  ParamStore<float> p = init_depthnet<float>(cfg, 1);
  Tensorf img = Tensorf::zeros({1, 3, 32, 60});
  EXPECT_THROW(depthnet_forward(img, p, cfg), ConfigError);
}

TEST(DepthNet, MinimumDepthHeadsOffTheBottleneck) {
  DepthNetConfig cfg = depth3_config();
  ParamStore<float> p = init_depthnet<float>(cfg, 5);
  Tensorf img = Tensorf::full({1, 3, 16, 32}, 0.25f);
  DisparityPyramid<float> pyr = depthnet_forward(img, p, cfg);
  const int ws[4] = {4, 8, 16, 32};
  for (int s = 0; s < 4; ++s)
    EXPECT_TRUE(pyr.left[s].values.shape == Shape({1, 1, ws[s] / 2, ws[s]}));
}

TEST(DepthNet, ForwardIsDeterministic) {
  DepthNetConfig cfg = DepthNetConfig::toy();
  ParamStore<float> p = init_depthnet<float>(cfg, 9);
  auto g = rng(10);
  Tensorf img = testutil::random_tensor<float>({1, 3, 32, 64}, g, 0.0f, 1.0f);
  DisparityPyramid<float> a = depthnet_forward(img, p, cfg);
  DisparityPyramid<float> b = depthnet_forward(img, p, cfg);
  for (int s = 0; s < 4; ++s)
    EXPECT_EQ(std::memcmp(a.left[s].values.data->data(), b.left[s].values.data->data(),
                          a.left[s].values.numel() * sizeof(float)),
              0);
}

TEST(ConfidenceNet, ShapeRangeAndSize) {
  ConfidenceNetConfig cfg = ConfidenceNetConfig::toy();
  ParamStore<float> p = init_confidencenet<float>(cfg, 13);
  auto g = rng(14);
  Tensorf img = testutil::random_tensor<float>({1, 3, 16, 24}, g, 0.0f, 1.0f);
  ConfidenceMap<float> c = confidencenet_forward(img, p, cfg);
  ASSERT_TRUE(c.values.shape == Shape({1, 1, 16, 24}));
  for (float v : *c.values.data) {
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
  }

  ParamStore<float> cp = init_confidencenet<float>(ConfidenceNetConfig::paper(), 1);
  ParamStore<float> dp = init_depthnet<float>(DepthNetConfig::paper(), 1);
  EXPECT_LT(cp.scalar_count(), dp.scalar_count());
}

TEST(ConfidenceNet, IndivisibleExtentsRejected) {
  ConfidenceNetConfig cfg = ConfidenceNetConfig::paper();  // needs multiples of 32
  ParamStore<float> p = init_confidencenet<float>(cfg, 2);
  Tensorf img = Tensorf::zeros({1, 3, 48, 64});
  EXPECT_THROW(confidencenet_forward(img, p, cfg), ConfigError);
}

TEST(Adam, DefaultsMatchConventions) {
  AdamConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.lr, 1e-4);
  EXPECT_DOUBLE_EQ(cfg.beta1, 0.9);
  EXPECT_DOUBLE_EQ(cfg.beta2, 0.999);
  EXPECT_DOUBLE_EQ(cfg.eps, 1e-8);
}

TEST(Adam, ZeroGradientIsAFixedPoint) {
  ParamStore<double> p;
  Tensord& w = p.add("w", {2, 2, 1, 1});
  (*w.data) = {1.0, -2.0, 3.0, 0.5};
  Taped tape;
  p.watch_all(tape);  // allocates zeroed grads
  AdamConfig cfg;
  adam_step(p, cfg);
  EXPECT_EQ(p.step, 1);
  const std::vector<double> expect = {1.0, -2.0, 3.0, 0.5};
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ((*w.data)[i], expect[i]);
    EXPECT_DOUBLE_EQ(p.entries[0].m[i], 0.0);
    EXPECT_DOUBLE_EQ(p.entries[0].v[i], 0.0);
  }
}

TEST(Adam, FirstStepIsApproximatelySignedLr) {
  ParamStore<double> p;
  Tensord& w = p.add("w", {1, 3, 1, 1});
  (*w.data) = {0.4, -1.0, 2.0};
  Taped tape;
  p.watch_all(tape);
  (*w.grad) = {0.7, -0.03, 1500.0};
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(p, cfg);
  EXPECT_NEAR((*w.data)[0], 0.4 - 0.1, 1e-3 * 0.1);
  EXPECT_NEAR((*w.data)[1], -1.0 + 0.1, 1e-3 * 0.1);
  EXPECT_NEAR((*w.data)[2], 2.0 - 0.1, 1e-3 * 0.1);
}

TEST(Adam, MissingGradientsRejected) {
  ParamStore<double> p;
  p.add("w", {1, 1, 1, 1});
  AdamConfig cfg;
  EXPECT_THROW(adam_step(p, cfg), ConfigError);
}

TEST(Adam, ScheduledLrHalvesOnceAfterHalfBudget) {
  EXPECT_DOUBLE_EQ(scheduled_lr(4e-4, 0, 100), 4e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(4e-4, 49, 100), 4e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(4e-4, 50, 100), 2e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(4e-4, 99, 100), 2e-4);
  EXPECT_THROW(scheduled_lr(4e-4, 0, 0), ConfigError);
}

TEST(Checkpoint, ByteExactRoundTrip) {
  ParamStore<float> p = init_depthnet<float>(DepthNetConfig::toy(), 17);
  // give the moments non-trivial content via one update with synthetic grads
  Tapef tape;
  p.watch_all(tape);
  auto g = rng(18);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& e : p.entries)
    for (float& gv : *e.value.grad) gv = dist(g);
  AdamConfig acfg;
  adam_step(p, acfg);
  p.unwatch_all();
  p.step = 42;

  const std::map<std::string, std::string> config = {{"preset", "toy"},
                                                     {"loss_mode", "mean"}};
  const std::string path_a = tmp_path("ck_a.bin");
  save_checkpoint(path_a, p, config);

  ParamStore<float> q;
  const auto loaded_config = load_checkpoint(path_a, q);
  EXPECT_EQ(loaded_config, config);
  EXPECT_EQ(q.step, 42);
  EXPECT_TRUE(stores_equal(p, q));

  const std::string path_b = tmp_path("ck_b.bin");
  save_checkpoint(path_b, q, loaded_config);
  EXPECT_EQ(file_bytes(path_a), file_bytes(path_b));
}

TEST(Checkpoint, MismatchesAndCorruptionRejected) {
  ParamStore<float> p = init_depthnet<float>(DepthNetConfig::toy(), 19);
  const std::string path = tmp_path("ck_c.bin");
  save_checkpoint(path, p, {});

  ParamStore<float> other = init_depthnet<float>(depth3_config(), 19);
  EXPECT_THROW(load_checkpoint(path, other), ConfigError);

  ParamStore<float> fresh;
  EXPECT_THROW(load_checkpoint(tmp_path("ck_missing.bin"), fresh), IoError);

  const std::string garbled = tmp_path("ck_d.bin");
  std::ofstream(garbled, std::ios::binary) << "not a checkpoint at all";
  EXPECT_THROW(load_checkpoint(garbled, fresh), IoError);
}

TEST(Training, OneSmallStepStrictlyDecreasesTotalLoss) {
  // descent sanity at lr = 1e-6 across 10 seeds
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    StereoSample<double> scene = gen_textured_scene<double>(
        64, 32, TextureSpec{}, DisparitySpec::two_plane(3.0, 7.0), seed);
    DepthNetConfig cfg = DepthNetConfig::toy();
    ParamStore<double> p = init_depthnet<double>(cfg, seed * 100);
    LossWeights weights;

    auto eval_loss = [&](bool train) {
      Taped tape;
      if (train) p.watch_all(tape);
      DisparityPyramid<double> pyr = depthnet_forward(scene.left, p, cfg);
      LossBreakdown<double> b = total_loss(scene.left, scene.right, pyr, weights);
      const double value = b.l_total.item();
      if (train) {
        tape.backward(b.l_total);
        AdamConfig acfg;
        acfg.lr = 1e-6;
        adam_step(p, acfg);
        p.unwatch_all();
      }
      return value;
    };

    const double before = eval_loss(true);
    const double after = eval_loss(false);
    ASSERT_LT(after, before) << "seed " << seed;
  }
}
