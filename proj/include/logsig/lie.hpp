#pragma once

// Lyndon words, the free Lie algebra dimension formula, and the change of
// basis between Lie elements stored as tensors and compact Lyndon coordinates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logsig/errors.hpp"
#include "logsig/tensor.hpp"

namespace logsig {

/// Words use letters 0..width-1 internally.
using Word = std::vector<int>;

/// Residual gate of lie_project, absolute and coefficientwise.
inline constexpr double kLieResidualTolerance = 1e-8;

/// Printable form with letters 1..d; letters are comma separated once d > 9.
inline std::string word_to_string(const Word& w, int width) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (width > 9 && i > 0) s += ',';
    s += std::to_string(w[i] + 1);
  }
  return s;
}

/// Index of a word inside its tensor level (row-major, first letter most significant).
inline std::size_t word_index(const Word& w, int width) {
  std::size_t idx = 0;
  for (int letter : w) idx = idx * static_cast<std::size_t>(width) + static_cast<std::size_t>(letter);
  return idx;
}

/// True if w is strictly smaller than each of its proper suffixes.
inline bool is_lyndon(std::span<const int> w) {
  if (w.empty()) return false;
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (!std::lexicographical_compare(w.begin(), w.end(), w.begin() + i, w.end())) return false;
  }
  return true;
}

/// Classical Mobius function by trial division.
inline int mobius(int n) {
  int result = 1;
  for (int p = 2; p * p <= n; ++p) {
    if (n % p == 0) {
      n /= p;
      if (n % p == 0) return 0;
      result = -result;
    }
  }
  if (n > 1) result = -result;
  return result;
}

/// Number of Lyndon words of length n over d letters: (1/n) sum_{k|n} mu(k) d^(n/k).
inline std::int64_t necklace_count(int d, int n) {
  std::int64_t total = 0;
  for (int k = 1; k <= n; ++k) {
    if (n % k != 0) continue;
    std::int64_t p = 1;
    for (int i = 0; i < n / k; ++i) p *= d;
    total += mobius(k) * p;
  }
  return total / n;
}

/// Dimension of the truncated free Lie algebra, i.e. of the log-signature.
inline std::size_t logsig_dim(int d, int depth) {
  if (d < 1 || depth < 1) throw DomainError("logsig_dim requires positive width and depth");
  std::int64_t total = 0;
  for (int n = 1; n <= depth; ++n) total += necklace_count(d, n);
  return static_cast<std::size_t>(total);
}

/// Sparse homogeneous tensor: (index within level, integer coefficient).
using SparseLevel = std::vector<std::pair<std::size_t, std::int64_t>>;

class LyndonBasis {
 public:
  LyndonBasis(int width, int depth) : width_(width), depth_(depth) {
    if (width < 1 || depth < 1) {
      throw DomainError("Lyndon basis requires positive width and depth");
    }
    generate_words();
    build_brackets();
    build_triangular_system();
  }

  int width() const { return width_; }
  int depth() const { return depth_; }
  std::size_t size() const { return words_.size(); }

  const std::vector<Word>& words() const { return words_; }
  const Word& word(std::size_t i) const { return words_[i]; }
  /// Expansion of the standard bracketing of word i; lives in level |word i|.
  const SparseLevel& bracket(std::size_t i) const { return brackets_[i]; }

  /// Basis indices [grade_begin(n), grade_begin(n+1)) hold the words of length n.
  std::size_t grade_begin(int n) const { return grade_start_[n - 1]; }
  std::size_t grade_size(int n) const { return grade_start_[n] - grade_start_[n - 1]; }

  /// Standard factorization w = uv, v the longest proper Lyndon suffix.
  static std::pair<Word, Word> standard_factorization(const Word& w) {
    for (std::size_t i = 1; i < w.size(); ++i) {
      std::span<const int> suffix(w.data() + i, w.size() - i);
      if (is_lyndon(suffix)) return {Word(w.begin(), w.begin() + i), Word(w.begin() + i, w.end())};
    }
    throw DomainError("standard factorization requires a Lyndon word of length >= 2");
  }

  /// sum_i c_i bracket_i as a tensor with zero scalar term.
  TensorElement expand(std::span<const double> coords) const {
    if (coords.size() != words_.size()) {
      throw ShapeError("Lie coordinates have length " + std::to_string(coords.size()) + ", expected " +
                       std::to_string(words_.size()));
    }
    TensorElement out(width_, depth_);
    for (std::size_t i = 0; i < words_.size(); ++i) {
      const double c = coords[i];
      if (c == 0.0) continue;
      auto lv = out.level(static_cast<int>(words_[i].size()));
      for (const auto& [idx, coef] : brackets_[i]) lv[idx] += c * static_cast<double>(coef);
    }
    return out;
  }

  /// Back-substitution on the unit-triangular system of Lyndon coefficients.
  /// Reads only the Lyndon-word entries of t; no residual check.
  std::vector<double> solve(const TensorElement& t) const {
    check_shape(t);
    std::vector<double> coords(words_.size(), 0.0);
    for (std::size_t i = 0; i < words_.size(); ++i) {
      double v = t.level(static_cast<int>(words_[i].size()))[flat_[i]];
      for (const auto& [j, coef] : lower_[i]) v -= coords[j] * static_cast<double>(coef);
      coords[i] = v;
    }
    return coords;
  }

  /// Adjoint of solve: gradient with respect to the tensor (nonzero only at Lyndon words).
  TensorElement solve_vjp(std::span<const double> grad_coords) const {
    if (grad_coords.size() != words_.size()) {
      throw ShapeError("gradient of Lie coordinates has length " + std::to_string(grad_coords.size()) +
                       ", expected " + std::to_string(words_.size()));
    }
    std::vector<double> g(grad_coords.begin(), grad_coords.end());
    TensorElement out(width_, depth_);
    for (std::size_t i = words_.size(); i-- > 0;) {
      for (const auto& [j, coef] : lower_[i]) g[j] -= static_cast<double>(coef) * g[i];
      out.level(static_cast<int>(words_[i].size()))[flat_[i]] = g[i];
    }
    return out;
  }

  void check_shape(const TensorElement& t) const {
    if (t.width() != width_ || t.depth() != depth_) {
      throw ShapeError("tensor (width " + std::to_string(t.width()) + ", depth " +
                       std::to_string(t.depth()) + ") does not match Lyndon basis (width " +
                       std::to_string(width_) + ", depth " + std::to_string(depth_) + ")");
    }
  }

 private:
  void generate_words() {
    // Duval's algorithm yields all Lyndon words of length <= depth in lex order.
    std::vector<Word> lex;
    Word w{-1};
    while (!w.empty()) {
      ++w.back();
      lex.push_back(w);
      const std::size_t m = w.size();
      while (w.size() < static_cast<std::size_t>(depth_)) w.push_back(w[w.size() - m]);
      while (!w.empty() && w.back() == width_ - 1) w.pop_back();
    }
    std::stable_sort(lex.begin(), lex.end(),
                     [](const Word& a, const Word& b) { return a.size() < b.size(); });
    words_ = std::move(lex);
    grade_start_.assign(static_cast<std::size_t>(depth_) + 1, 0);
    for (int n = 1; n <= depth_; ++n) {
      grade_start_[n] = grade_start_[n - 1];
      while (grade_start_[n] < words_.size() && words_[grade_start_[n]].size() == static_cast<std::size_t>(n)) {
        ++grade_start_[n];
      }
    }
    flat_.resize(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) flat_[i] = word_index(words_[i], width_);
  }

  void build_brackets() {
    std::map<Word, std::size_t> position;
    brackets_.resize(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      const Word& w = words_[i];
      position.emplace(w, i);
      if (w.size() == 1) {
        brackets_[i] = {{static_cast<std::size_t>(w[0]), 1}};
        continue;
      }
      const auto [u, v] = standard_factorization(w);
      const SparseLevel& left = brackets_[position.at(u)];
      const SparseLevel& right = brackets_[position.at(v)];
      const std::size_t left_stride = level_size(width_, static_cast<int>(u.size()));
      const std::size_t right_stride = level_size(width_, static_cast<int>(v.size()));
      std::map<std::size_t, std::int64_t> acc;
      for (const auto& [p, cp] : left) {
        for (const auto& [q, cq] : right) {
          acc[p * right_stride + q] += cp * cq;
          acc[q * left_stride + p] -= cp * cq;
        }
      }
      SparseLevel expansion;
      for (const auto& [idx, c] : acc) {
        if (c != 0) expansion.emplace_back(idx, c);
      }
      brackets_[i] = std::move(expansion);
    }
  }

  void build_triangular_system() {
    lower_.assign(words_.size(), {});
    for (int n = 1; n <= depth_; ++n) {
      std::vector<std::ptrdiff_t> lyndon_at(level_size(width_, n), -1);
      for (std::size_t i = grade_begin(n); i < grade_begin(n) + grade_size(n); ++i) {
        lyndon_at[flat_[i]] = static_cast<std::ptrdiff_t>(i);
      }
      for (std::size_t j = grade_begin(n); j < grade_begin(n) + grade_size(n); ++j) {
        for (const auto& [idx, coef] : brackets_[j]) {
          const std::ptrdiff_t i = lyndon_at[idx];
          if (i < 0 || static_cast<std::size_t>(i) == j) continue;
          lower_[static_cast<std::size_t>(i)].emplace_back(j, coef);
        }
      }
    }
  }

  int width_;
  int depth_;
  std::vector<Word> words_;
  std::vector<std::size_t> grade_start_;
  std::vector<std::size_t> flat_;
  std::vector<SparseLevel> brackets_;
  // lower_[i]: (j, coefficient of word i in bracket j) for j != i in the same grade.
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> lower_;
};

/// Builds the Lyndon basis of the truncated free Lie algebra over d letters.
inline LyndonBasis lyndon_words(int d, int depth) { return LyndonBasis(d, depth); }

/// Shared, lazily built basis per (d, depth).
inline std::shared_ptr<const LyndonBasis> cached_basis(int d, int depth) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const LyndonBasis>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{d, depth}];
  if (!slot) slot = std::make_shared<const LyndonBasis>(d, depth);
  return slot;
}

/// Coordinates of a log-signature in the Lyndon basis.
struct LieCoords {
  int width = 0;
  int depth = 0;
  std::vector<double> coords;
};

/// Lyndon coordinates of a Lie element; rejects inputs whose reconstruction
/// misses the tensor by more than kLieResidualTolerance.
inline LieCoords lie_project(const TensorElement& t) {
  if (std::abs(t.scalar()) > kScalarTolerance) {
    throw DomainError("lie_project requires a zero scalar term, got " + std::to_string(t.scalar()));
  }
  const auto basis = cached_basis(t.width(), t.depth());
  LieCoords out{t.width(), t.depth(), basis->solve(t)};
  const TensorElement back = basis->expand(out.coords);
  double residual = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) residual = std::max(residual, std::abs(t.data()[i] - back.data()[i]));
  if (!(residual <= kLieResidualTolerance)) {
    throw NotLieError("tensor is not a Lie element: residual " + std::to_string(residual) +
                      " exceeds " + std::to_string(kLieResidualTolerance));
  }
  return out;
}

inline TensorElement lie_expand(const LieCoords& c) {
  return cached_basis(c.width, c.depth)->expand(c.coords);
}

}  // namespace logsig
