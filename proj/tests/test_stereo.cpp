#include <gtest/gtest.h>

#include <cmath>

#include "pd/gradcheck.hpp"
#include "pd/ops.hpp"
#include "pd/stereo.hpp"
#include "testutil.hpp"

using namespace pd;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::rng;

namespace {

CameraRig rig(double b, double f) { return CameraRig{b, f}; }

Tensord const_map(Shape s, double v) { return Tensord::full(s, v); }

}  // namespace

TEST(Triangulation, DirectApplication) {
  DisparityMap<double> d{const_map({1, 1, 1, 1}, 4.0), Side::left};
  DepthMap<double> D = disparity_to_depth(d, rig(1.0, 100.0));
  EXPECT_DOUBLE_EQ(D.values.item(), 25.0);
  EXPECT_DOUBLE_EQ(D.floored.item(), 0.0);

  DisparityMap<double> d2{const_map({1, 1, 1, 1}, 10.0), Side::left};
  EXPECT_DOUBLE_EQ(disparity_to_depth(d2, rig(0.5, 720.0)).values.item(), 36.0);
}

TEST(Triangulation, ZeroDisparityHitsFloor) {
  DisparityMap<double> d{const_map({1, 1, 1, 2}, 0.0), Side::left};
  DepthMap<double> D = disparity_to_depth(d, rig(1.0, 100.0));
  EXPECT_DOUBLE_EQ((*D.values.data)[0], 100.0 / kDispEps);
  EXPECT_DOUBLE_EQ((*D.floored.data)[0], 1.0);
}

TEST(Triangulation, InverseDirect) {
  DepthMap<double> D{const_map({1, 1, 1, 1}, 25.0), Tensord::zeros({1, 1, 1, 1})};
  DisparityMap<double> d = depth_to_disparity(D, rig(1.0, 100.0), Side::left);
  EXPECT_DOUBLE_EQ(d.values.item(), 4.0);
}

TEST(Triangulation, RoundTripWithinTolerance) {
  auto g = rng(71);
  const int W = 40;
  Tensord vals = Tensord::zeros({1, 1, 4, W});
  std::uniform_real_distribution<double> dist(0.1, kDispMaxFrac * W);
  for (auto& v : *vals.data) v = dist(g);
  DisparityMap<double> d{vals, Side::left};
  const CameraRig r = rig(0.54, 721.0);
  DisparityMap<double> d2 = depth_to_disparity(disparity_to_depth(d, r), r, Side::left);
  for (std::size_t i = 0; i < vals.data->size(); ++i) {
    const double rel = std::fabs((*d2.values.data)[i] - (*vals.data)[i]) / (*vals.data)[i];
    EXPECT_LT(rel, 1e-6);
  }
}

TEST(Triangulation, LargeDepthGivesSmallDisparity) {
  DepthMap<double> D{const_map({1, 1, 1, 1}, 1e9), Tensord::zeros({1, 1, 1, 1})};
  EXPECT_LT(depth_to_disparity(D, rig(1.0, 100.0), Side::left).values.item(), 1e-6);
}

TEST(Triangulation, NonpositiveDepthThrows) {
  DepthMap<double> D{const_map({1, 1, 1, 1}, 0.0), Tensord::zeros({1, 1, 1, 1})};
  EXPECT_THROW(depth_to_disparity(D, rig(1.0, 100.0), Side::left), NumericError);
}

TEST(Warp, ZeroDisparityIsIdentity) {
  auto g = rng(72);
  Tensord src = random_tensor<double>({1, 3, 4, 7}, g);
  DisparityMap<double> d{Tensord::zeros({1, 1, 4, 7}), Side::left};
  Tensord out = warp_reconstruct(src, d, WarpDir::reconstruct_left);
  EXPECT_LT(max_abs_diff(out, src), 1e-15);
}

TEST(Warp, PeriodicImageShiftByPeriod) {
  const int W = 12, p = 4;
  Tensord src = Tensord::zeros({1, 1, 1, W});
  for (int x = 0; x < W; ++x) src.at(0, 0, 0, x) = std::sin(2.0 * M_PI * x / p);
  DisparityMap<double> d{const_map({1, 1, 1, W}, double(p)), Side::left};
  Tensord out = warp_reconstruct(src, d, WarpDir::reconstruct_left);
  // interior: columns where x - p stays in range
  for (int x = p; x < W; ++x)
    EXPECT_NEAR(out.at(0, 0, 0, x), src.at(0, 0, 0, x), 1e-12) << "col " << x;
}

TEST(Warp, RampImageConstantShift) {
  const int W = 10;
  Tensord src = Tensord::zeros({1, 1, 1, W});
  for (int x = 0; x < W; ++x) src.at(0, 0, 0, x) = double(x);
  DisparityMap<double> d{const_map({1, 1, 1, W}, 2.0), Side::left};
  Tensord out = warp_reconstruct(src, d, WarpDir::reconstruct_left);
  for (int x = 2; x < W; ++x) EXPECT_DOUBLE_EQ(out.at(0, 0, 0, x), double(x - 2));
}

TEST(Warp, RightReconstructionShiftsRight) {
  const int W = 10;
  Tensord src = Tensord::zeros({1, 1, 1, W});
  for (int x = 0; x < W; ++x) src.at(0, 0, 0, x) = double(x);
  DisparityMap<double> d{const_map({1, 1, 1, W}, 3.0), Side::right};
  Tensord out = warp_reconstruct(src, d, WarpDir::reconstruct_right);
  for (int x = 0; x < W - 3; ++x) EXPECT_DOUBLE_EQ(out.at(0, 0, 0, x), double(x + 3));
}

TEST(Warp, SideMismatchRejected) {
  Tensord src = Tensord::zeros({1, 1, 2, 4});
  DisparityMap<double> dl{Tensord::zeros({1, 1, 2, 4}), Side::left};
  DisparityMap<double> dr{Tensord::zeros({1, 1, 2, 4}), Side::right};
  EXPECT_THROW(warp_reconstruct(src, dl, WarpDir::reconstruct_right), ConfigError);
  EXPECT_THROW(warp_reconstruct(src, dr, WarpDir::reconstruct_left), ConfigError);
}

TEST(Warp, ResolutionMismatchRejected) {
  Tensord src = Tensord::zeros({1, 1, 2, 4});
  DisparityMap<double> d{Tensord::zeros({1, 1, 2, 5}), Side::left};
  EXPECT_THROW(warp_reconstruct(src, d, WarpDir::reconstruct_left), ConfigError);
}

TEST(Warp, NoHolesForAnyFiniteDisparity) {
  auto g = rng(73);
  Tensord src = random_tensor<double>({1, 1, 3, 8}, g);
  Tensord dv = random_tensor<double>({1, 1, 3, 8}, g, -5.0, 50.0);  // even wild values
  DisparityMap<double> d{dv, Side::left};
  Tensord out = warp_reconstruct(src, d, WarpDir::reconstruct_left);
  EXPECT_TRUE(out.all_finite());
}

TEST(Warp, GradWrtDisparityMatchesFiniteDifference) {
  auto g = rng(74);
  Tensord src = random_tensor<double>({1, 1, 2, 9}, g);
  Tensord d0 = Tensord::zeros({1, 1, 2, 9});
  std::uniform_real_distribution<double> dist(0.3, 2.7);
  for (auto& v : *d0.data) v = dist(g);
  double err = finite_difference_check<double>(
      [&](Taped& t, const Tensord& dv) {
        DisparityMap<double> d{dv, Side::left};
        Tensord o = warp_reconstruct(src.clone(), d, WarpDir::reconstruct_left);
        return reduce_mean(mul(o, o), Reduce::all);
      },
      d0, 1e-5);
  EXPECT_LT(err, 1e-5);
}

TEST(Patches, ConstantImageAllElementsEqual) {
  Tensord img = Tensord::full({1, 1, 4, 5}, 3.25);
  PatchSet<double> ps = sample_patches(img, 3);
  ASSERT_EQ(ps.patches.shape, (Shape{1, 9, 4, 5}));
  for (double v : *ps.patches.data) EXPECT_DOUBLE_EQ(v, 3.25);
  EXPECT_FALSE(ps.shifted);
}

TEST(Patches, ZeroShiftMatchesNaiveIm2col) {
  auto g = rng(75);
  for (int n : {3, 5, 7}) {
    Tensord img = random_tensor<double>({2, 1, 6, 8}, g);
    PatchSet<double> ps = sample_patches(img, n);
    Tensord want = testutil::naive_patches(img, n);
    ASSERT_EQ(ps.patches.shape, want.shape);
    EXPECT_LT(max_abs_diff(ps.patches, want), 1e-15) << "window " << n;
  }
}

TEST(Patches, IntegerShiftMovesCenters) {
  const int W = 10;
  Tensord img = Tensord::zeros({1, 1, 1, W});
  for (int x = 0; x < W; ++x) img.at(0, 0, 0, x) = double(x);
  DisparityMap<double> d{Tensord::full({1, 1, 1, W}, 1.0), Side::left};
  PatchSet<double> ps = sample_patches(img, &d, 3);
  // center element (e=4) at column x samples img at x-1 on a ramp
  for (int x = 2; x < W; ++x)
    EXPECT_DOUBLE_EQ(ps.patches.at(0, 4, 0, x), double(x - 1));
  EXPECT_TRUE(ps.shifted);
}

TEST(Patches, RightSideShiftsPositive) {
  const int W = 10;
  Tensord img = Tensord::zeros({1, 1, 1, W});
  for (int x = 0; x < W; ++x) img.at(0, 0, 0, x) = double(x);
  DisparityMap<double> d{Tensord::full({1, 1, 1, W}, 2.0), Side::right};
  PatchSet<double> ps = sample_patches(img, &d, 3);
  for (int x = 0; x < W - 3; ++x)
    EXPECT_DOUBLE_EQ(ps.patches.at(0, 4, 0, x), double(x + 2));
}

TEST(Patches, CenterElementEqualsBilinearSample) {
  auto g = rng(76);
  Tensord img = random_tensor<double>({1, 1, 3, 9}, g);
  Tensord dv = Tensord::zeros({1, 1, 3, 9});
  std::uniform_real_distribution<double> dist(0.25, 1.75);
  for (auto& v : *dv.data) v = dist(g);
  DisparityMap<double> d{dv, Side::left};
  PatchSet<double> ps = sample_patches(img, &d, 5);
  Tensord warped = warp_reconstruct(img, d, WarpDir::reconstruct_left);
  const int center = (5 * 5) / 2;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 9; ++x)
      EXPECT_NEAR(ps.patches.at(0, center, y, x), warped.at(0, 0, y, x), 1e-14);
}

TEST(Patches, EvenWindowRejected) {
  Tensord img = Tensord::zeros({1, 1, 4, 4});
  EXPECT_THROW(sample_patches(img, 4), ConfigError);
  EXPECT_THROW(sample_patches(img, 1), ConfigError);
}

TEST(Patches, MultiChannelRejected) {
  Tensord img = Tensord::zeros({1, 3, 4, 4});
  EXPECT_THROW(sample_patches(img, 3), ConfigError);
}

TEST(Patches, GradWrtDisparityMatchesFiniteDifference) {
  auto g = rng(77);
  Tensord img = random_tensor<double>({1, 1, 3, 10}, g);
  Tensord d0 = Tensord::zeros({1, 1, 3, 10});
  std::uniform_real_distribution<double> dist(0.3, 1.7);
  for (auto& v : *d0.data) v = dist(g);
  double err = finite_difference_check<double>(
      [&](Taped& t, const Tensord& dv) {
        DisparityMap<double> d{dv, Side::left};
        PatchSet<double> ps = sample_patches(img.clone(), &d, 3);
        return reduce_mean(mul(ps.patches, ps.patches), Reduce::all);
      },
      d0, 1e-5);
  EXPECT_LT(err, 1e-5);
}

TEST(Patches, GradWrtImageMatchesFiniteDifference) {
  auto g = rng(78);
  Tensord img0 = random_tensor<double>({1, 1, 3, 8}, g);
  Tensord dv = Tensord::zeros({1, 1, 3, 8});
  std::uniform_real_distribution<double> dist(0.3, 1.7);
  for (auto& v : *dv.data) v = dist(g);
  double err = finite_difference_check<double>(
      [&](Taped& t, const Tensord& im) {
        DisparityMap<double> d{dv.clone(), Side::left};
        PatchSet<double> ps = sample_patches(im, &d, 3);
        return reduce_mean(mul(ps.patches, ps.patches), Reduce::all);
      },
      img0, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(DisparityValidation, RangeEnforced) {
  DisparityMap<double> ok{Tensord::full({1, 1, 2, 10}, 2.9), Side::left};
  EXPECT_NO_THROW(validate_disparity(ok));
  DisparityMap<double> neg{Tensord::full({1, 1, 2, 10}, -0.1), Side::left};
  EXPECT_THROW(validate_disparity(neg), ConfigError);
  DisparityMap<double> big{Tensord::full({1, 1, 2, 10}, 3.1), Side::left};  // > 0.3*10
  EXPECT_THROW(validate_disparity(big), ConfigError);
}
