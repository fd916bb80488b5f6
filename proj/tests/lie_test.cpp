#include <gtest/gtest.h>

#include <algorithm>

#include "logsig/lie.hpp"
#include "logsig/rng.hpp"
#include "reference_algebra.hpp"

using logsig::Word;

namespace {

std::vector<std::string> names(const logsig::LyndonBasis& b) {
  std::vector<std::string> out;
  for (const auto& w : b.words()) out.push_back(logsig::word_to_string(w, b.width()));
  return out;
}

// Lyndon by definition: strictly smaller than every proper rotation.
bool lyndon_by_rotation(const Word& w) {
  for (std::size_t r = 1; r < w.size(); ++r) {
    Word rot(w.begin() + r, w.end());
    rot.insert(rot.end(), w.begin(), w.begin() + r);
    if (!(w < rot)) return false;
  }
  return true;
}

}  // namespace

TEST(Lyndon, SmallBases) {
  EXPECT_EQ(names(logsig::lyndon_words(2, 2)), (std::vector<std::string>{"1", "2", "12"}));
  EXPECT_EQ(names(logsig::lyndon_words(1, 5)), (std::vector<std::string>{"1"}));
  EXPECT_EQ(names(logsig::lyndon_words(2, 3)), (std::vector<std::string>{"1", "2", "12", "112", "122"}));
}

TEST(Lyndon, MatchesBruteForceRotationTest) {
  for (int d = 1; d <= 3; ++d) {
    for (int m = 1; m <= 5; ++m) {
      std::vector<Word> expected;
      for (int n = 1; n <= m; ++n) {
        for (const auto& w : ref::all_words(d, n)) {
          if (lyndon_by_rotation(w)) expected.push_back(w);
        }
      }
      EXPECT_EQ(logsig::lyndon_words(d, m).words(), expected) << "d=" << d << " M=" << m;
    }
  }
}

TEST(Lyndon, DimensionFormula) {
  EXPECT_EQ(logsig::logsig_dim(2, 4), 8u);
  EXPECT_EQ(logsig::logsig_dim(2, 2), 3u);
  for (int m = 1; m <= 7; ++m) EXPECT_EQ(logsig::logsig_dim(1, m), 1u);
  for (int d = 1; d <= 5; ++d) {
    for (int m = 1; m <= 6; ++m) {
      EXPECT_EQ(logsig::lyndon_words(d, m).size(), logsig::logsig_dim(d, m)) << d << "," << m;
    }
  }
  EXPECT_EQ(logsig::mobius(1), 1);
  EXPECT_EQ(logsig::mobius(6), 1);
  EXPECT_EQ(logsig::mobius(12), 0);
  EXPECT_EQ(logsig::mobius(30), -1);
  EXPECT_THROW(logsig::logsig_dim(0, 2), logsig::DomainError);
}

TEST(Lyndon, StandardFactorization) {
  // 11212 = (112)(12): 1212 repeats a factor, 212 is not Lyndon.
  const auto [u, v] = logsig::LyndonBasis::standard_factorization(Word{0, 0, 1, 0, 1});
  EXPECT_EQ(u, (Word{0, 0, 1}));
  EXPECT_EQ(v, (Word{0, 1}));
  const auto [a, b] = logsig::LyndonBasis::standard_factorization(Word{0, 1, 1});
  EXPECT_EQ(a, (Word{0, 1}));
  EXPECT_EQ(b, (Word{1}));
  EXPECT_THROW(logsig::LyndonBasis::standard_factorization(Word{0}), logsig::DomainError);
}

TEST(Lyndon, BracketsAreTriangular) {
  for (int d = 1; d <= 4; ++d) {
    for (int m = 1; m <= 5; ++m) {
      const auto basis = logsig::lyndon_words(d, m);
      for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto self = logsig::word_index(basis.word(i), d);
        bool found = false;
        for (const auto& [idx, coef] : basis.bracket(i)) {
          if (idx == self) {
            EXPECT_EQ(coef, 1);
            found = true;
          } else {
            EXPECT_GT(idx, self);  // same length, so index order is lex order
          }
        }
        EXPECT_TRUE(found);
      }
    }
  }
}

TEST(Lie, ExpandOfSingleBracket) {
  logsig::LieCoords c{2, 2, {0, 0, 1}};
  const auto t = logsig::lie_expand(c);
  EXPECT_EQ(t.level(2)[1], 1.0);
  EXPECT_EQ(t.level(2)[2], -1.0);
  EXPECT_EQ(t.level(2)[0], 0.0);
  EXPECT_EQ(t.level(2)[3], 0.0);
  EXPECT_EQ(logsig::lie_expand(logsig::LieCoords{2, 3, std::vector<double>(5, 0.0)})
                .max_abs_diff(logsig::TensorElement(2, 3)),
            0.0);
  EXPECT_THROW(logsig::lie_expand(logsig::LieCoords{2, 2, {1, 2}}), logsig::ShapeError);
}

TEST(Lie, ProjectLevelOne) {
  logsig::TensorElement t(2, 3);
  t.level(1)[0] = 0.25;
  t.level(1)[1] = -3.0;
  const auto c = logsig::lie_project(t);
  ASSERT_EQ(c.coords.size(), 5u);
  EXPECT_EQ(c.coords[0], 0.25);
  EXPECT_EQ(c.coords[1], -3.0);
  for (std::size_t i = 2; i < 5; ++i) EXPECT_EQ(c.coords[i], 0.0);
}

TEST(Lie, ProjectLogOfTwoAxisSteps) {
  const auto g = logsig::tensor_mul(
      logsig::tensor_exp(logsig::TensorElement::from_vector(2, std::vector<double>{1, 0})),
      logsig::tensor_exp(logsig::TensorElement::from_vector(2, std::vector<double>{0, 1})));
  const auto c = logsig::lie_project(logsig::tensor_log(g));
  ASSERT_EQ(c.coords.size(), 3u);
  EXPECT_NEAR(c.coords[0], 1.0, 1e-15);
  EXPECT_NEAR(c.coords[1], 1.0, 1e-15);
  EXPECT_NEAR(c.coords[2], 0.5, 1e-15);
}

TEST(Lie, RoundTripsRandomCombinations) {
  logsig::Rng rng(21);
  for (int d = 1; d <= 3; ++d) {
    for (int m = 1; m <= 5; ++m) {
      logsig::LieCoords c{d, m, std::vector<double>(logsig::logsig_dim(d, m))};
      for (double& v : c.coords) v = rng.uniform(-2, 2);
      const auto back = logsig::lie_project(logsig::lie_expand(c));
      for (std::size_t i = 0; i < c.coords.size(); ++i) EXPECT_NEAR(back.coords[i], c.coords[i], 1e-12);
    }
  }
}

TEST(Lie, RejectsNonLieTensor) {
  logsig::TensorElement t(2, 2);
  t.level(2)[0] = 1.0;  // e1 (x) e1 is symmetric, not a Lie element
  EXPECT_THROW(logsig::lie_project(t), logsig::NotLieError);
  EXPECT_THROW(logsig::lie_project(logsig::TensorElement::unit(2, 2)), logsig::DomainError);
}

TEST(Lie, LogOfGroupLikeAlwaysPassesResidualGate) {
  logsig::Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = logsig::TensorElement::unit(3, 4);
    for (int step = 0; step < 6; ++step) {
      std::vector<double> v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      logsig::mul_exp_increment_inplace(g, v);
    }
    EXPECT_NO_THROW(logsig::lie_project(logsig::tensor_log(g)));
  }
}

TEST(Lie, SolveAdjointIdentity) {
  // <solve_vjp(g), t> == <g, solve(t)> for the linear Lyndon solve.
  logsig::Rng rng(23);
  const auto basis = logsig::cached_basis(3, 4);
  const auto t = ref::random_tensor(rng, 3, 4);
  std::vector<double> g(basis->size());
  for (double& v : g) v = rng.uniform(-1, 1);
  const auto coords = basis->solve(t);
  const auto adj = basis->solve_vjp(g);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) lhs += adj.data()[i] * t.data()[i];
  for (std::size_t i = 0; i < g.size(); ++i) rhs += g[i] * coords[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Lie, CachedBasisIsShared) {
  EXPECT_EQ(logsig::cached_basis(2, 3).get(), logsig::cached_basis(2, 3).get());
}
