#include <gtest/gtest.h>

#include <cmath>

#include "logsig/rng.hpp"
#include "logsig/tensor.hpp"
#include "reference_algebra.hpp"

using logsig::TensorElement;

TEST(Tensor, LevelSizesAndLayout) {
  TensorElement t(3, 4);
  EXPECT_EQ(t.size(), 1u + 3 + 9 + 27 + 81);
  for (int k = 0; k <= 4; ++k) EXPECT_EQ(t.level(k).size(), logsig::level_size(3, k));
  EXPECT_THROW(TensorElement(0, 2), logsig::DomainError);
}

TEST(Tensor, UnitIsIdentity) {
  logsig::Rng rng(1);
  const auto b = ref::random_tensor(rng, 3, 3, 1.0, 0.7);
  const auto one = TensorElement::unit(3, 3);
  EXPECT_EQ(logsig::tensor_mul(one, b).max_abs_diff(b), 0.0);
  EXPECT_EQ(logsig::tensor_mul(b, one).max_abs_diff(b), 0.0);
}

TEST(Tensor, ProductOfBasisLetters) {
  const std::vector<double> e1{1.0, 0.0};
  const std::vector<double> e2{0.0, 1.0};
  const auto c = logsig::tensor_mul(TensorElement::from_vector(2, e1), TensorElement::from_vector(2, e2));
  const auto l2 = c.level(2);
  EXPECT_EQ(l2[0], 0.0);  // 11
  EXPECT_EQ(l2[1], 1.0);  // 12
  EXPECT_EQ(l2[2], 0.0);  // 21
  EXPECT_EQ(l2[3], 0.0);  // 22
  EXPECT_EQ(c.level(1)[0], 0.0);
}

TEST(Tensor, ProductMatchesWordOracle) {
  logsig::Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = ref::random_tensor(rng, 3, 3, 1.0, rng.uniform(-1, 1));
    const auto b = ref::random_tensor(rng, 3, 3, 1.0, rng.uniform(-1, 1));
    const auto expected = ref::mul(ref::from_tensor(a), ref::from_tensor(b));
    EXPECT_LT(ref::max_diff(expected, logsig::tensor_mul(a, b)), 1e-13);
  }
}

TEST(Tensor, ProductIsAssociative) {
  logsig::Rng rng(3);
  const auto a = ref::random_tensor(rng, 3, 4, 1.0, 0.5);
  const auto b = ref::random_tensor(rng, 3, 4, 1.0, -1.0);
  const auto c = ref::random_tensor(rng, 3, 4, 1.0, 2.0);
  const auto left = logsig::tensor_mul(logsig::tensor_mul(a, b), c);
  const auto right = logsig::tensor_mul(a, logsig::tensor_mul(b, c));
  EXPECT_LT(left.max_abs_diff(right), 1e-12);
}

TEST(Tensor, ProductDistributesAndCommutesWithScaling) {
  logsig::Rng rng(4);
  const auto a = ref::random_tensor(rng, 2, 4, 1.0, 0.3);
  const auto b = ref::random_tensor(rng, 2, 4, 1.0, 0.1);
  const auto c = ref::random_tensor(rng, 2, 4, 1.0, -0.4);
  const auto lhs = logsig::tensor_mul(a, b + c);
  const auto rhs = logsig::tensor_mul(a, b) + logsig::tensor_mul(a, c);
  EXPECT_LT(lhs.max_abs_diff(rhs), 1e-13);
  EXPECT_LT(logsig::tensor_mul(a * 2.5, b).max_abs_diff(logsig::tensor_mul(a, b) * 2.5), 1e-13);

  const auto lie = ref::random_tensor(rng, 2, 4, 0.5);
  EXPECT_LT(logsig::tensor_log(logsig::tensor_exp(lie * 0.5)).max_abs_diff(lie * 0.5), 1e-13);
}

TEST(Tensor, GradingLevelKDependsOnlyOnLowerLevels) {
  logsig::Rng rng(5);
  auto a = ref::random_tensor(rng, 2, 4, 1.0, 1.0);
  auto b = ref::random_tensor(rng, 2, 4, 1.0, 1.0);
  const auto base = logsig::tensor_mul(a, b);
  a.level(3)[1] += 10.0;
  b.level(4)[0] -= 5.0;
  const auto perturbed = logsig::tensor_mul(a, b);
  for (int k = 0; k <= 2; ++k) {
    for (std::size_t i = 0; i < base.level(k).size(); ++i) EXPECT_EQ(base.level(k)[i], perturbed.level(k)[i]);
  }
}

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(logsig::tensor_mul(TensorElement(2, 3), TensorElement(3, 3)), logsig::ShapeError);
  EXPECT_THROW(logsig::tensor_mul(TensorElement(2, 3), TensorElement(2, 2)), logsig::ShapeError);
}

TEST(Tensor, ExpOfZeroIsUnit) {
  const auto e = logsig::tensor_exp(TensorElement(3, 3));
  EXPECT_EQ(e.max_abs_diff(TensorElement::unit(3, 3)), 0.0);
}

TEST(Tensor, ExpOneDimensionalIsPowerSeries) {
  const double c = 1.7;
  const auto e = logsig::tensor_exp(TensorElement::from_vector(4, std::vector<double>{c}));
  double factorial = 1.0;
  for (int k = 0; k <= 4; ++k) {
    if (k > 0) factorial *= k;
    EXPECT_NEAR(e.level(k)[0], std::pow(c, k) / factorial, 1e-15);
  }
}

TEST(Tensor, ExpAndLogMatchSeriesOracle) {
  logsig::Rng rng(6);
  const auto a = ref::random_tensor(rng, 2, 4, 1.0);
  EXPECT_LT(ref::max_diff(ref::exp(ref::from_tensor(a)), logsig::tensor_exp(a)), 1e-13);
  const auto g = ref::random_tensor(rng, 2, 4, 1.0, 1.0);
  EXPECT_LT(ref::max_diff(ref::log(ref::from_tensor(g)), logsig::tensor_log(g)), 1e-13);
}

TEST(Tensor, ExpLogRoundTrips) {
  logsig::Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = ref::random_tensor(rng, 2, 3, 2.0);
    EXPECT_LT(logsig::tensor_log(logsig::tensor_exp(a)).max_abs_diff(a), 1e-12);
    const auto g = ref::random_tensor(rng, 3, 3, 1.0, 1.0);
    EXPECT_LT(logsig::tensor_exp(logsig::tensor_log(g)).max_abs_diff(g), 1e-12);
  }
}

TEST(Tensor, LogOfUnitIsZero) {
  const auto l = logsig::tensor_log(TensorElement::unit(2, 4));
  EXPECT_EQ(l.max_abs_diff(TensorElement(2, 4)), 0.0);
}

TEST(Tensor, LogOfTwoAxisSteps) {
  const auto g = logsig::tensor_mul(logsig::tensor_exp(TensorElement::from_vector(2, std::vector<double>{1, 0})),
                                    logsig::tensor_exp(TensorElement::from_vector(2, std::vector<double>{0, 1})));
  const auto l = logsig::tensor_log(g);
  EXPECT_EQ(l.scalar(), 0.0);
  EXPECT_NEAR(l.level(1)[0], 1.0, 1e-15);
  EXPECT_NEAR(l.level(1)[1], 1.0, 1e-15);
  EXPECT_NEAR(l.level(2)[0], 0.0, 1e-15);
  EXPECT_NEAR(l.level(2)[1], 0.5, 1e-15);
  EXPECT_NEAR(l.level(2)[2], -0.5, 1e-15);
  EXPECT_NEAR(l.level(2)[3], 0.0, 1e-15);
}

TEST(Tensor, DomainErrors) {
  auto a = TensorElement::unit(2, 2);
  EXPECT_THROW(logsig::tensor_exp(a), logsig::DomainError);
  EXPECT_THROW(logsig::tensor_log(TensorElement(2, 2)), logsig::DomainError);
}

TEST(Tensor, FusedIncrementProductMatchesGenericProduct) {
  logsig::Rng rng(8);
  const std::vector<double> v{0.3, -1.2, 0.8};
  const auto s = ref::random_tensor(rng, 3, 4, 1.0, 1.0);
  auto fused = s;
  logsig::mul_exp_increment_inplace(fused, v);
  const auto generic = logsig::tensor_mul(s, logsig::tensor_exp(TensorElement::from_vector(4, v)));
  EXPECT_LT(fused.max_abs_diff(generic), 1e-13);
  EXPECT_LT(logsig::exp_increment(4, v).max_abs_diff(logsig::tensor_exp(TensorElement::from_vector(4, v))), 1e-15);
}

TEST(Tensor, ResultsStayFinite) {
  logsig::Rng rng(9);
  const auto a = ref::random_tensor(rng, 3, 4, 3.0);
  EXPECT_TRUE(logsig::tensor_exp(a).all_finite());
  EXPECT_TRUE(logsig::tensor_log(logsig::tensor_exp(a)).all_finite());
}

namespace {

// <weights, f(x)> for directional finite differences.
double dot(const TensorElement& a, const TensorElement& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace

TEST(TensorAdjoint, ProductMatchesFiniteDifferences) {
  logsig::Rng rng(10);
  const auto a = ref::random_tensor(rng, 2, 3, 1.0, 1.0);
  const auto b = ref::random_tensor(rng, 2, 3, 1.0, 1.0);
  const auto w = ref::random_tensor(rng, 2, 3, 1.0, 1.0);
  TensorElement ga(2, 3), gb(2, 3);
  logsig::tensor_mul_vjp(w, a, b, &ga, &gb);
  const double h = 1e-6;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto ap = a, am = a;
    ap.data()[i] += h;
    am.data()[i] -= h;
    const double fd = (dot(w, logsig::tensor_mul(ap, b)) - dot(w, logsig::tensor_mul(am, b))) / (2 * h);
    EXPECT_NEAR(ga.data()[i], fd, 1e-8);
    auto bp = b, bm = b;
    bp.data()[i] += h;
    bm.data()[i] -= h;
    const double fdb = (dot(w, logsig::tensor_mul(a, bp)) - dot(w, logsig::tensor_mul(a, bm))) / (2 * h);
    EXPECT_NEAR(gb.data()[i], fdb, 1e-8);
  }
}

TEST(TensorAdjoint, LogMatchesFiniteDifferences) {
  logsig::Rng rng(11);
  const auto g = ref::random_tensor(rng, 2, 4, 0.8, 1.0);
  const auto w = ref::random_tensor(rng, 2, 4, 1.0);
  const auto grad = logsig::tensor_log_vjp(g, w);
  const double h = 1e-6;
  for (std::size_t i = 1; i < g.size(); ++i) {
    auto gp = g, gm = g;
    gp.data()[i] += h;
    gm.data()[i] -= h;
    const double fd = (dot(w, logsig::tensor_log(gp)) - dot(w, logsig::tensor_log(gm))) / (2 * h);
    EXPECT_NEAR(grad.data()[i], fd, 1e-7);
  }
}

TEST(TensorAdjoint, ExpIncrementMatchesFiniteDifferences) {
  logsig::Rng rng(12);
  const std::vector<double> v{0.4, -0.9, 1.3};
  const auto w = ref::random_tensor(rng, 3, 4, 1.0);
  std::vector<double> grad(3, 0.0);
  logsig::exp_increment_vjp(v, w, grad);
  const double h = 1e-6;
  for (int c = 0; c < 3; ++c) {
    auto vp = v, vm = v;
    vp[c] += h;
    vm[c] -= h;
    const double fd = (dot(w, logsig::exp_increment(4, vp)) - dot(w, logsig::exp_increment(4, vm))) / (2 * h);
    EXPECT_NEAR(grad[c], fd, 1e-7);
  }
}

TEST(Tensor, JsonRoundTrip) {
  logsig::Rng rng(13);
  const auto t = ref::random_tensor(rng, 2, 3, 1.0, 1.0);
  const auto j = logsig::to_json(t);
  EXPECT_EQ(j.at("width"), 2);
  EXPECT_EQ(j.at("depth"), 3);
  EXPECT_EQ(j.at("levels").size(), 4u);
  EXPECT_EQ(logsig::tensor_from_json(nlohmann::json::parse(j.dump())).max_abs_diff(t), 0.0);
  auto bad = j;
  bad["levels"][2].push_back(1.0);
  EXPECT_THROW(logsig::tensor_from_json(bad), logsig::ShapeError);
}
