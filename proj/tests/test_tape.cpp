#include <gtest/gtest.h>

#include "pd/gradcheck.hpp"
#include "pd/ops.hpp"
#include "pd/tape.hpp"
#include "testutil.hpp"

using namespace pd;
using testutil::random_tensor;
using testutil::rng;

TEST(Tape, ConstantRootGivesZeroGrads) {
  Taped tape;
  Tensord x = Tensord::from_vector({1, 1, 1, 2}, {3, 4});
  tape.watch(x);
  Tensord c = Tensord::scalar(7.0);
  tape.watch(c);
  tape.backward(c);
  EXPECT_DOUBLE_EQ(x.grads()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grads()[1], 0.0);
}

TEST(Tape, MeanOfSquare) {
  // root = mean(x*x), x=[1,2] -> grad = 2x/n = [1, 2]
  Taped tape;
  Tensord x = Tensord::from_vector({1, 1, 1, 2}, {1, 2});
  tape.watch(x);
  Tensord root = reduce_mean(mul(x, x), Reduce::all);
  EXPECT_DOUBLE_EQ(root.item(), 2.5);
  tape.backward(root);
  EXPECT_DOUBLE_EQ(x.grads()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grads()[1], 2.0);
}

TEST(Tape, NonScalarRootRejected) {
  Taped tape;
  Tensord x = Tensord::from_vector({1, 1, 1, 2}, {1, 2});
  tape.watch(x);
  Tensord y = mul(x, x);
  EXPECT_THROW(tape.backward(y), ConfigError);
}

TEST(Tape, ForeignRootRejected) {
  Taped a, b;
  Tensord x = Tensord::scalar(2.0);
  a.watch(x);
  Tensord y = mul(x, x);
  EXPECT_THROW(b.backward(y), ConfigError);
  Tensord plain = Tensord::scalar(1.0);
  EXPECT_THROW(a.backward(plain), ConfigError);
}

TEST(Tape, AccumulationMatchesFusedExpression) {
  // y = x*x + x*x + x*x used three times vs z = 3*x*x computed once.
  Tensord x0 = Tensord::from_vector({1, 1, 1, 3}, {0.5, -1.25, 2.0});

  Taped t1;
  Tensord xa = x0.clone();
  t1.watch(xa);
  Tensord sq = mul(xa, xa);
  Tensord y = reduce_mean(add(add(sq, sq), sq), Reduce::all);
  t1.backward(y);

  Taped t2;
  Tensord xb = x0.clone();
  t2.watch(xb);
  Tensord z = reduce_mean(scale(mul(xb, xb), 3.0), Reduce::all);
  t2.backward(z);

  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(xa.grads()[i], xb.grads()[i]);
}

TEST(Tape, GradAccumulatesAcrossKUses) {
  Taped tape;
  Tensord x = Tensord::scalar(3.0);
  tape.watch(x);
  // root = x + x + x + x -> grad 4
  Tensord root = add(add(x, x), add(x, x));
  tape.backward(root);
  EXPECT_DOUBLE_EQ(x.grads()[0], 4.0);
}

TEST(Tape, ReachabilityPrunesSideBranches) {
  Taped tape;
  Tensord x = Tensord::scalar(2.0);
  Tensord w = Tensord::scalar(5.0);
  tape.watch(x);
  tape.watch(w);
  Tensord unused = mul(w, w);  // recorded but not reachable from the root
  (void)unused;
  Tensord root = mul(x, x);
  tape.backward(root);
  EXPECT_DOUBLE_EQ(x.grads()[0], 4.0);
  EXPECT_DOUBLE_EQ(w.grads()[0], 0.0);
}

TEST(Tape, DeterministicBitIdenticalReplay) {
  auto run = [] {
    auto g = rng(99);
    Taped tape;
    Tensord x = random_tensor<double>({1, 2, 4, 5}, g);
    Tensord k = random_tensor<double>({2, 2, 3, 3}, g);
    Tensord b = random_tensor<double>({2, 1, 1, 1}, g);
    tape.watch(x);
    tape.watch(k);
    tape.watch(b);
    Tensord root = reduce_mean(sigmoid(conv2d(x, k, b, 1, 1)), Reduce::all);
    tape.backward(root);
    std::vector<double> out;
    out.push_back(root.item());
    out.insert(out.end(), x.grads().begin(), x.grads().end());
    out.insert(out.end(), k.grads().begin(), k.grads().end());
    out.insert(out.end(), b.grads().begin(), b.grads().end());
    return out;
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]) << "element " << i << " differs bitwise";
  }
}

TEST(Tape, ZeroGradResetsBetweenSteps) {
  Taped tape;
  Tensord x = Tensord::scalar(3.0);
  tape.watch(x);
  Tensord r1 = mul(x, x);
  tape.backward(r1);
  EXPECT_DOUBLE_EQ(x.grads()[0], 6.0);
  x.zero_grad();
  Tensord r2 = mul(x, x);
  tape.backward(r2);
  EXPECT_DOUBLE_EQ(x.grads()[0], 6.0);  // not 12: fresh accumulation
}

TEST(Tape, MixedTapesRejected) {
  Taped a, b;
  Tensord x = Tensord::scalar(1.0);
  Tensord y = Tensord::scalar(2.0);
  a.watch(x);
  b.watch(y);
  EXPECT_THROW(add(x, y), ConfigError);
}

TEST(GradCheckMany, TinyTwoParamModel) {
  auto g = rng(7);
  Tensord w1 = random_tensor<double>({2, 1, 3, 3}, g);
  Tensord b1 = random_tensor<double>({2, 1, 1, 1}, g);
  Tensord x = random_tensor<double>({1, 1, 6, 6}, g);
  double err = finite_difference_check_many<double>(
      [&](Taped& t) {
        return reduce_mean(elu(conv2d(x, w1, b1, 2, 1)), Reduce::all);
      },
      {&w1, &b1}, 1e-5);
  EXPECT_LT(err, 1e-6);
}
