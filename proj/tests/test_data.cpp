#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "pd/data.hpp"
#include "pd/losses.hpp"
#include "testutil.hpp"

using namespace pd;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::rng;

namespace {

std::string tmp_path(const std::string& name) {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / "pd_data_tests";
    std::filesystem::create_directories(d);
    return d;
  }();
  return (dir / name).string();
}

// max |left - warp(right)| over valid pixels, all channels
template <typename T>
T masked_warp_error(const StereoSample<T>& s) {
  Tensor<T> rec = warp_reconstruct(s.right, s.gt, WarpDir::reconstruct_left);
  const Shape sh = s.left.shape;
  T worst = 0;
  for (int c = 0; c < sh.c; ++c)
    for (int y = 0; y < sh.h; ++y)
      for (int x = 0; x < sh.w; ++x) {
        if (s.gt_mask.at(0, 0, y, x) < T(0.5)) continue;
        worst = std::max(worst,
                         std::abs(s.left.at(0, c, y, x) - rec.at(0, c, y, x)));
      }
  return worst;
}

bool same_bytes(const Tensord& a, const Tensord& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data->data(), b.data->data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST(Stereogram, ConstructionInverseAcrossSpecs) {
  const DisparitySpec specs[] = {DisparitySpec::constant(4.0),
                                 DisparitySpec::two_plane(3.0, 8.0),
                                 DisparitySpec::slanted(3.0, 7.0)};
  std::uint64_t seed = 11;
  for (const auto& spec : specs) {
    StereoSample<double> s = gen_random_dot_stereogram<double>(64, 24, spec, 0.5, seed++);
    EXPECT_LE(masked_warp_error(s), 1e-6);
    ASSERT_TRUE(s.has_gt());
  }
}

TEST(Stereogram, TwoPlaneHistogramHasExactlyTwoValues) {
  StereoSample<double> s = gen_random_dot_stereogram<double>(
      64, 24, DisparitySpec::two_plane(3.0, 8.0), 0.5, 21);
  std::set<double> values;
  int masked = 0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 64; ++x) {
      if (s.gt_mask.at(0, 0, y, x) > 0.5)
        values.insert(s.gt.values.at(0, 0, y, x));
      else
        ++masked;
    }
  EXPECT_EQ(values, (std::set<double>{3.0, 8.0}));
  EXPECT_GT(masked, 0);  // the foreground edge must occlude something
}

TEST(Stereogram, SlantedDisparitiesAreRoundedToIntegers) {
  StereoSample<double> s = gen_random_dot_stereogram<double>(
      64, 16, DisparitySpec::slanted(2.3, 9.7), 0.5, 31);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 64; ++x) {
      if (s.gt_mask.at(0, 0, y, x) < 0.5) continue;
      const double d = s.gt.values.at(0, 0, y, x);
      EXPECT_DOUBLE_EQ(d, std::round(d));
    }
}

TEST(Stereogram, DeterministicPerSeed) {
  auto make = [](std::uint64_t seed) {
    return gen_random_dot_stereogram<double>(48, 20, DisparitySpec::two_plane(2, 6),
                                             0.4, seed);
  };
  StereoSample<double> a = make(7), b = make(7), c = make(8);
  EXPECT_TRUE(same_bytes(a.left, b.left));
  EXPECT_TRUE(same_bytes(a.right, b.right));
  EXPECT_TRUE(same_bytes(a.gt.values, b.gt.values));
  EXPECT_TRUE(same_bytes(a.gt_mask, b.gt_mask));
  EXPECT_FALSE(same_bytes(a.left, c.left));
}

TEST(Stereogram, RejectsBadDensityAndDisparity) {
  EXPECT_THROW(gen_random_dot_stereogram<double>(64, 16, DisparitySpec::constant(4),
                                                 0.0, 1),
               ConfigError);
  EXPECT_THROW(gen_random_dot_stereogram<double>(64, 16, DisparitySpec::constant(4),
                                                 1.5, 1),
               ConfigError);
  // 0.3 * 32 = 9.6, so 10 px is out of range
  EXPECT_THROW(gen_random_dot_stereogram<double>(32, 16, DisparitySpec::constant(10),
                                                 0.5, 1),
               ConfigError);
  EXPECT_THROW(gen_random_dot_stereogram<double>(32, 16, DisparitySpec::constant(-1),
                                                 0.5, 1),
               ConfigError);
}

TEST(Textured, ConstructionInverseAcrossSpecs) {
  const DisparitySpec specs[] = {DisparitySpec::constant(4.5),
                                 DisparitySpec::two_plane(3.25, 7.75),
                                 DisparitySpec::slanted(3.2, 7.8)};
  std::uint64_t seed = 41;
  for (const auto& spec : specs) {
    StereoSample<double> s = gen_textured_scene<double>(64, 24, TextureSpec{}, spec, seed++);
    EXPECT_LE(masked_warp_error(s), 1e-6);
  }
}

TEST(Textured, ImagesStayInUnitIntervalAndDeterministic) {
  StereoSample<double> a =
      gen_textured_scene<double>(48, 20, TextureSpec{}, DisparitySpec::slanted(2, 8), 5);
  StereoSample<double> b =
      gen_textured_scene<double>(48, 20, TextureSpec{}, DisparitySpec::slanted(2, 8), 5);
  for (double v : *a.left.data) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_TRUE(same_bytes(a.left, b.left));
  EXPECT_TRUE(same_bytes(a.right, b.right));
}

TEST(Textured, ZeroAmplitudeDegeneratesToConstantAndZeroZncc) {
  TextureSpec tex;
  tex.amplitude = 0.0;
  StereoSample<double> s =
      gen_textured_scene<double>(32, 12, tex, DisparitySpec::constant(3.0), 3);
  for (double v : *s.left.data) ASSERT_DOUBLE_EQ(v, 0.5);
  // textureless windows correlate to zero under the stabilized ZNCC
  PatchSet<double> p = sample_patches(channel_mean(s.left), 3);
  PatchSet<double> q = sample_patches(channel_mean(s.right), 3);
  Tensord z = zncc(p, q);
  for (double v : *z.data) ASSERT_NEAR(v, 0.0, 1e-9);
}

TEST(Augment, IdentityConfigIsNoop) {
  StereoSample<double> s = gen_textured_scene<double>(
      32, 12, TextureSpec{}, DisparitySpec::constant(3.0), 9);
  StereoSample<double> out = augment(s, AugmentConfig::identity(), 123);
  EXPECT_TRUE(same_bytes(out.left, s.left));
  EXPECT_TRUE(same_bytes(out.right, s.right));
  ASSERT_TRUE(out.has_gt());
  EXPECT_TRUE(same_bytes(out.gt.values, s.gt.values));
}

TEST(Augment, FlipSwapsViewsAndDropsGt) {
  StereoSample<double> s = gen_textured_scene<double>(
      32, 12, TextureSpec{}, DisparitySpec::constant(3.0), 10);
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.flip_probability = 1.0;
  StereoSample<double> once = augment(s, cfg, 1);
  EXPECT_FALSE(once.has_gt());
  EXPECT_TRUE(same_bytes(once.left, mirror_horizontal(s.right)));
  EXPECT_TRUE(same_bytes(once.right, mirror_horizontal(s.left)));
  StereoSample<double> twice = augment(once, cfg, 2);
  EXPECT_TRUE(same_bytes(twice.left, s.left));
  EXPECT_TRUE(same_bytes(twice.right, s.right));
}

TEST(Augment, GammaTwoMapsHalfToQuarter) {
  StereoSample<double> s;
  s.left = Tensord::full({1, 3, 4, 6}, 0.5);
  s.right = Tensord::full({1, 3, 4, 6}, 0.5);
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.gamma_lo = cfg.gamma_hi = 2.0;
  StereoSample<double> out = augment(s, cfg, 77);
  for (double v : *out.left.data) ASSERT_NEAR(v, 0.25, 1e-12);
  for (double v : *out.right.data) ASSERT_NEAR(v, 0.25, 1e-12);
}

TEST(Augment, BrightnessScalesAndClamps) {
  StereoSample<double> s;
  s.left = Tensord::full({1, 3, 2, 3}, 0.5);
  s.right = Tensord::full({1, 3, 2, 3}, 0.9);
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.brightness_lo = cfg.brightness_hi = 1.5;
  StereoSample<double> out = augment(s, cfg, 5);
  for (double v : *out.left.data) ASSERT_NEAR(v, 0.75, 1e-12);
  for (double v : *out.right.data) ASSERT_DOUBLE_EQ(v, 1.0);  // 1.35 clamped
}

TEST(Augment, SameTransformBothViewsRangeAndDeterminism) {
  auto g = rng(301);
  StereoSample<double> s;
  s.left = random_tensor<double>({1, 3, 6, 9}, g, 0.0, 1.0);
  s.right = s.left.clone();
  AugmentConfig cfg;  // full default ranges
  cfg.flip_probability = 0.0;
  StereoSample<double> a = augment(s, cfg, 99);
  StereoSample<double> b = augment(s, cfg, 99);
  EXPECT_TRUE(same_bytes(a.left, b.left));
  // identical inputs must receive the identical photometric chain
  EXPECT_TRUE(same_bytes(a.left, a.right));
  bool changed = false;
  for (std::size_t i = 0; i < a.left.data->size(); ++i) {
    const double v = (*a.left.data)[i];
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
    changed |= v != (*s.left.data)[i];
  }
  EXPECT_TRUE(changed);
}

TEST(ImageIo, PngRoundTripWithinQuantization) {
  auto g = rng(401);
  Tensord img = random_tensor<double>({1, 3, 6, 10}, g, 0.0, 1.0);
  const std::string path = tmp_path("rt.png");
  write_image8(path, img);
  Tensord back = read_image8<double>(path);
  ASSERT_TRUE(back.shape == img.shape);
  EXPECT_LE(max_abs_diff(img, back), 0.5 / 255.0 + 1e-9);
}

TEST(ImageIo, PpmRoundTripWithinQuantization) {
  auto g = rng(402);
  Tensord img = random_tensor<double>({1, 3, 5, 7}, g, 0.0, 1.0);
  const std::string path = tmp_path("rt.ppm");
  write_image8(path, img);
  Tensord back = read_image8<double>(path);
  ASSERT_TRUE(back.shape == img.shape);
  EXPECT_LE(max_abs_diff(img, back), 0.5 / 255.0 + 1e-9);
}

TEST(ImageIo, GrayscaleWriteReadsBackAsRgb) {
  Tensord img = Tensord::full({1, 1, 3, 4}, 0.25);
  const std::string path = tmp_path("gray.png");
  write_image8(path, img);
  Tensord back = read_image8<double>(path);
  ASSERT_TRUE(back.shape == Shape({1, 3, 3, 4}));
  for (double v : *back.data) EXPECT_NEAR(v, 0.25, 0.5 / 255.0 + 1e-9);
}

TEST(ImageIo, UnsupportedExtensionRejected) {
  Tensord img = Tensord::zeros({1, 3, 2, 2});
  EXPECT_THROW(write_image8(tmp_path("x.bmp"), img), ConfigError);
  EXPECT_THROW(read_image8<double>(tmp_path("x.bmp")), ConfigError);
}

TEST(ImageIo, MissingFileThrowsIoErrorNamingPath) {
  const std::string path = tmp_path("does_not_exist.png");
  try {
    read_image8<double>(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
  }
}

TEST(PfmIo, FloatRoundTripIsBitExact) {
  auto g = rng(403);
  Tensorf map = random_tensor<float>({1, 1, 7, 5}, g, -10.0f, 30.0f);
  const std::string path = tmp_path("map.pfm");
  write_pfm(path, map);
  Tensorf back = read_pfm<float>(path);
  ASSERT_TRUE(back.shape == map.shape);
  EXPECT_EQ(std::memcmp(back.data->data(), map.data->data(),
                        map.numel() * sizeof(float)),
            0);
}

TEST(PfmIo, NonpositiveValuesBecomeInvalid) {
  Tensord map = Tensord::from_vector({1, 1, 1, 4}, {4.0, 0.0, -1.0, 2.5});
  const std::string path = tmp_path("inv.pfm");
  write_pfm(path, map);
  GtDisparity<double> gt = load_gt_disparity<double>(path);
  EXPECT_DOUBLE_EQ(gt.mask.at(0, 0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(gt.mask.at(0, 0, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(gt.mask.at(0, 0, 0, 2), 0.0);
  EXPECT_DOUBLE_EQ(gt.mask.at(0, 0, 0, 3), 1.0);
  EXPECT_DOUBLE_EQ(gt.map.values.at(0, 0, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(gt.map.values.at(0, 0, 0, 3), 2.5);
  EXPECT_EQ(gt.map.side, Side::left);
}

TEST(Pgm16Io, QuarterPixelRoundTripAndRawEncoding) {
  Tensord map = Tensord::from_vector({1, 1, 1, 3}, {4.0, 17.25, 100.75});
  const std::string path = tmp_path("d.pgm");
  write_pgm16(path, map);
  GtDisparity<double> gt = load_gt_disparity<double>(path);
  for (int x = 0; x < 3; ++x) {
    EXPECT_DOUBLE_EQ(gt.map.values.at(0, 0, 0, x), map.at(0, 0, 0, x));
    EXPECT_DOUBLE_EQ(gt.mask.at(0, 0, 0, x), 1.0);
  }
  // 4.0 px encodes as raw 1024 = 0x0400, big-endian in the stream
  std::ifstream f(path, std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(f)), {});
  ASSERT_GE(all.size(), std::size_t(6));
  const auto* bytes = reinterpret_cast<const unsigned char*>(all.data() + all.size() - 6);
  EXPECT_EQ(bytes[0], 0x04);
  EXPECT_EQ(bytes[1], 0x00);
}

TEST(Pgm16Io, RawZeroMeansInvalid) {
  Tensord map = Tensord::from_vector({1, 1, 1, 2}, {0.0, 3.0});
  const std::string path = tmp_path("z.pgm");
  write_pgm16(path, map);
  GtDisparity<double> gt = load_gt_disparity<double>(path);
  EXPECT_DOUBLE_EQ(gt.mask.at(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(gt.mask.at(0, 0, 0, 1), 1.0);
  EXPECT_DOUBLE_EQ(gt.map.values.at(0, 0, 0, 1), 3.0);
}

TEST(Resize, IdentityConstantAndLinearRamp) {
  auto g = rng(404);
  Tensord img = random_tensor<double>({1, 3, 5, 8}, g);
  Tensord same = resize_bilinear(img, 8, 5);
  EXPECT_EQ(max_abs_diff(img, same), 0.0);

  Tensord flat = Tensord::full({1, 1, 4, 4}, 0.3);
  Tensord up = resize_bilinear(flat, 9, 7);
  ASSERT_TRUE(up.shape == Shape({1, 1, 7, 9}));
  for (double v : *up.data) EXPECT_NEAR(v, 0.3, 1e-12);

  // table-size contract used for real pairs
  Tensord wide = Tensord::zeros({1, 3, 375, 1242});
  Tensord sized = resize_bilinear(wide, 512, 256);
  EXPECT_TRUE(sized.shape == Shape({1, 3, 256, 512}));
}

TEST(StereoPairIo, NativeAndResizedLoad) {
  auto g = rng(405);
  Tensord left = random_tensor<double>({1, 3, 12, 20}, g, 0.0, 1.0);
  Tensord right = random_tensor<double>({1, 3, 12, 20}, g, 0.0, 1.0);
  const std::string lp = tmp_path("pair_l.png"), rp = tmp_path("pair_r.png");
  write_image8(lp, left);
  write_image8(rp, right);

  StereoSample<double> native = load_stereo_pair<double>(lp, rp);
  ASSERT_TRUE(native.left.shape == left.shape);
  EXPECT_LE(max_abs_diff(native.left, left), 0.5 / 255.0 + 1e-9);
  EXPECT_LE(max_abs_diff(native.right, right), 0.5 / 255.0 + 1e-9);
  EXPECT_FALSE(native.has_gt());

  StereoSample<double> sized = load_stereo_pair<double>(lp, rp, 16, 8);
  EXPECT_TRUE(sized.left.shape == Shape({1, 3, 8, 16}));
  EXPECT_TRUE(sized.right.shape == Shape({1, 3, 8, 16}));
}

TEST(StereoPairIo, ExtentMismatchRejected) {
  auto g = rng(406);
  const std::string lp = tmp_path("mm_l.png"), rp = tmp_path("mm_r.png");
  write_image8(lp, random_tensor<double>({1, 3, 12, 20}, g, 0.0, 1.0));
  write_image8(rp, random_tensor<double>({1, 3, 12, 18}, g, 0.0, 1.0));
  EXPECT_THROW(load_stereo_pair<double>(lp, rp), ConfigError);
}

TEST(Manifest, ParsesPairsTriplesAndComments) {
  const std::string path = tmp_path("list.txt");
  {
    std::ofstream f(path);
    f << "# training pairs\n"
      << "\n"
      << "a/l.png a/r.png\n"
      << "b/l.png b/r.png b/gt.pfm\n";
  }
  auto entries = read_manifest(path);
  ASSERT_EQ(entries.size(), std::size_t(2));
  EXPECT_EQ(entries[0].left, "a/l.png");
  EXPECT_EQ(entries[0].right, "a/r.png");
  EXPECT_TRUE(entries[0].gt.empty());
  EXPECT_EQ(entries[1].gt, "b/gt.pfm");
}

TEST(Manifest, MalformedLineNamesLineNumber) {
  const std::string path = tmp_path("bad.txt");
  {
    std::ofstream f(path);
    f << "a/l.png a/r.png\n"
      << "only_one_token\n";
  }
  try {
    read_manifest(path);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}
