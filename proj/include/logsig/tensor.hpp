#pragma once

// Dense truncated tensor algebra T^M(R^d).
//
// An element stores levels 0..M contiguously. Level k holds d^k coefficients
// indexed by words (i_1, ..., i_k) in row-major order: the first letter is the
// most significant digit, so word index = sum_j i_j * d^(k-j) with letters
// numbered from 0. Printed words use letters 1..d.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logsig/errors.hpp"

namespace logsig {

/// Tolerance used when checking that a scalar term is exactly 0 or 1.
inline constexpr double kScalarTolerance = 1e-12;

/// Number of words of length k over an alphabet of size width.
inline std::size_t level_size(int width, int k) {
  std::size_t n = 1;
  for (int i = 0; i < k; ++i) n *= static_cast<std::size_t>(width);
  return n;
}

class TensorElement {
 public:
  TensorElement() = default;

  /// Zero element of T^depth(R^width).
  TensorElement(int width, int depth) : width_(width), depth_(depth) {
    if (width < 1 || depth < 1) {
      throw DomainError("tensor width and depth must be positive (got width " +
                        std::to_string(width) + ", depth " + std::to_string(depth) + ")");
    }
    offsets_.resize(static_cast<std::size_t>(depth) + 2);
    offsets_[0] = 0;
    for (int k = 0; k <= depth; ++k) offsets_[k + 1] = offsets_[k] + level_size(width, k);
    data_.assign(offsets_.back(), 0.0);
  }

  static TensorElement unit(int width, int depth) {
    TensorElement t(width, depth);
    t.data_[0] = 1.0;
    return t;
  }

  /// Embeds a vector of R^width as a pure level-1 element.
  static TensorElement from_vector(int depth, std::span<const double> v) {
    TensorElement t(static_cast<int>(v.size()), depth);
    std::copy(v.begin(), v.end(), t.level(1).begin());
    return t;
  }

  int width() const { return width_; }
  int depth() const { return depth_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> level(int k) {
    return {data_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
  }
  std::span<const double> level(int k) const {
    return {data_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
  }
  std::size_t offset(int k) const { return offsets_[k]; }

  double scalar() const { return data_[0]; }
  double& scalar() { return data_[0]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const TensorElement& other) const {
    return width_ == other.width_ && depth_ == other.depth_;
  }

  TensorElement& operator+=(const TensorElement& other) {
    require_same_shape(other, "tensor addition");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  TensorElement& operator-=(const TensorElement& other) {
    require_same_shape(other, "tensor subtraction");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }
  TensorElement& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend TensorElement operator+(TensorElement a, const TensorElement& b) { return a += b; }
  friend TensorElement operator-(TensorElement a, const TensorElement& b) { return a -= b; }
  friend TensorElement operator*(TensorElement a, double s) { return a *= s; }
  friend TensorElement operator*(double s, TensorElement a) { return a *= s; }

  /// Largest coefficientwise absolute difference.
  double max_abs_diff(const TensorElement& other) const {
    require_same_shape(other, "tensor comparison");
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::abs(data_[i] - other.data_[i]));
    return m;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  void require_same_shape(const TensorElement& other, const char* what) const {
    if (!same_shape(other)) {
      throw ShapeError(std::string(what) + ": shape mismatch (width " + std::to_string(width_) +
                       ", depth " + std::to_string(depth_) + " vs width " +
                       std::to_string(other.width_) + ", depth " + std::to_string(other.depth_) + ")");
    }
  }

 private:
  int width_ = 0;
  int depth_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<double> data_;
};

namespace detail {

// out_{i+j} += a_i (x) b_j over all i + j <= depth, skipping levels below the
// given minimum orders (used to skip zero scalar terms).
inline void mul_accumulate(const TensorElement& a, const TensorElement& b, TensorElement& out,
                           int a_min = 0, int b_min = 0) {
  const int depth = out.depth();
  const int width = out.width();
  for (int k = depth; k >= 0; --k) {
    auto dst = out.level(k);
    for (int i = a_min; i + b_min <= k; ++i) {
      const int j = k - i;
      const auto left = a.level(i);
      const auto right = b.level(j);
      const std::size_t stride = level_size(width, j);
      for (std::size_t u = 0; u < left.size(); ++u) {
        const double au = left[u];
        if (au == 0.0) continue;
        double* row = dst.data() + u * stride;
        for (std::size_t v = 0; v < stride; ++v) row[v] += au * right[v];
      }
    }
  }
}

}  // namespace detail

/// Truncated tensor product: level k of the result is sum_{i+j=k} a_i (x) b_j.
inline TensorElement tensor_mul(const TensorElement& a, const TensorElement& b) {
  a.require_same_shape(b, "tensor_mul");
  TensorElement out(a.width(), a.depth());
  detail::mul_accumulate(a, b, out);
  return out;
}

/// exp(a) = sum_n a^n / n!, exact on the truncated algebra for a with zero
/// scalar term. Evaluated as 1 + a(1 + a/2 (1 + a/3 (...))).
inline TensorElement tensor_exp(const TensorElement& a) {
  if (std::abs(a.scalar()) > kScalarTolerance) {
    throw DomainError("tensor_exp requires a zero scalar term, got " + std::to_string(a.scalar()));
  }
  const int depth = a.depth();
  TensorElement r = TensorElement::unit(a.width(), depth);
  for (int n = depth; n >= 1; --n) {
    TensorElement next = TensorElement::unit(a.width(), depth);
    TensorElement prod(a.width(), depth);
    detail::mul_accumulate(a, r, prod, 1, 0);
    prod *= 1.0 / n;
    next += prod;
    r = std::move(next);
  }
  return r;
}

/// log(g) = sum_{n=1}^{M} (-1)^(n-1)/n (g - 1)^n for g with unit scalar term.
inline TensorElement tensor_log(const TensorElement& g) {
  if (std::abs(g.scalar() - 1.0) > kScalarTolerance) {
    throw DomainError("tensor_log requires scalar term 1, got " + std::to_string(g.scalar()));
  }
  TensorElement t = g;
  t.scalar() = 0.0;
  TensorElement out = t;
  TensorElement power = t;
  for (int n = 2; n <= g.depth(); ++n) {
    TensorElement next(g.width(), g.depth());
    detail::mul_accumulate(power, t, next, n - 1, 1);
    power = std::move(next);
    const double c = ((n % 2 == 0) ? -1.0 : 1.0) / n;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += c * power.data()[i];
  }
  return out;
}

/// exp of the level-1 element v: level k equals v^{(x)k} / k!.
inline TensorElement exp_increment(int depth, std::span<const double> v) {
  const int width = static_cast<int>(v.size());
  TensorElement out = TensorElement::unit(width, depth);
  for (int k = 1; k <= depth; ++k) {
    const auto prev = out.level(k - 1);
    auto cur = out.level(k);
    const double inv = 1.0 / k;
    for (std::size_t u = 0; u < prev.size(); ++u) {
      const double pu = prev[u] * inv;
      for (int c = 0; c < width; ++c) cur[u * width + c] = pu * v[c];
    }
  }
  return out;
}

/// s <- s (x) exp(v) in place, Horner form per level.
inline void mul_exp_increment_inplace(TensorElement& s, std::span<const double> v) {
  const int width = s.width();
  if (static_cast<int>(v.size()) != width) {
    throw ShapeError("increment width " + std::to_string(v.size()) + " does not match tensor width " +
                     std::to_string(width));
  }
  std::vector<double> acc;
  std::vector<double> next;
  for (int k = s.depth(); k >= 1; --k) {
    // acc runs through s_0 v/k, (acc + s_1) v/(k-1), ...
    acc.assign(s.level(0).begin(), s.level(0).end());
    for (int j = 0; j < k; ++j) {
      if (j > 0) {
        const auto sj = s.level(j);
        for (std::size_t u = 0; u < acc.size(); ++u) acc[u] += sj[u];
      }
      const double inv = 1.0 / (k - j);
      next.resize(acc.size() * width);
      for (std::size_t u = 0; u < acc.size(); ++u) {
        const double au = acc[u] * inv;
        for (int c = 0; c < width; ++c) next[u * width + c] = au * v[c];
      }
      acc.swap(next);
    }
    auto sk = s.level(k);
    for (std::size_t u = 0; u < sk.size(); ++u) sk[u] += acc[u];
  }
}

// ---------------------------------------------------------------------------
// Vector-Jacobian products. Each adjoint accumulates into its outputs.

/// Adjoint of c = a (x) b. Either gradient pointer may be null.
inline void tensor_mul_vjp(const TensorElement& grad_out, const TensorElement& a,
                           const TensorElement& b, TensorElement* grad_a, TensorElement* grad_b) {
  const int depth = grad_out.depth();
  const int width = grad_out.width();
  for (int k = 0; k <= depth; ++k) {
    const auto g = grad_out.level(k);
    for (int i = 0; i <= k; ++i) {
      const int j = k - i;
      const std::size_t stride = level_size(width, j);
      const auto ai = a.level(i);
      const auto bj = b.level(j);
      for (std::size_t u = 0; u < ai.size(); ++u) {
        const double* grow = g.data() + u * stride;
        if (grad_a) {
          double s = 0.0;
          for (std::size_t v = 0; v < stride; ++v) s += grow[v] * bj[v];
          grad_a->level(i)[u] += s;
        }
        if (grad_b) {
          const double au = ai[u];
          if (au != 0.0) {
            auto gb = grad_b->level(j);
            for (std::size_t v = 0; v < stride; ++v) gb[v] += grow[v] * au;
          }
        }
      }
    }
  }
}

/// Adjoint of exp_increment: accumulates d<grad_out, exp(v)>/dv into grad_v.
inline void exp_increment_vjp(std::span<const double> v, const TensorElement& grad_out,
                              std::span<double> grad_v) {
  const int width = static_cast<int>(v.size());
  const int depth = grad_out.depth();
  const TensorElement e = exp_increment(depth, v);
  TensorElement g = grad_out;
  for (int k = depth; k >= 1; --k) {
    const auto prev = e.level(k - 1);
    const auto gk = g.level(k);
    auto gprev = g.level(k - 1);
    const double inv = 1.0 / k;
    for (std::size_t u = 0; u < prev.size(); ++u) {
      const double* row = gk.data() + u * width;
      double s = 0.0;
      for (int c = 0; c < width; ++c) {
        grad_v[c] += inv * prev[u] * row[c];
        s += row[c] * v[c];
      }
      gprev[u] += inv * s;
    }
  }
}

/// Adjoint of tensor_log at g: returns d<grad_out, log(g)>/dg.
inline TensorElement tensor_log_vjp(const TensorElement& g, const TensorElement& grad_out) {
  g.require_same_shape(grad_out, "tensor_log_vjp");
  const int depth = g.depth();
  TensorElement t = g;
  t.scalar() = 0.0;
  std::vector<TensorElement> powers;
  powers.reserve(depth);
  powers.push_back(t);
  for (int n = 2; n <= depth; ++n) powers.push_back(tensor_mul(powers.back(), t));

  std::vector<TensorElement> grads;
  grads.reserve(depth);
  for (int n = 1; n <= depth; ++n) {
    const double c = ((n % 2 == 0) ? -1.0 : 1.0) / n;
    grads.push_back(grad_out * c);
  }
  TensorElement grad_t(g.width(), depth);
  for (int n = depth; n >= 2; --n) {
    tensor_mul_vjp(grads[n - 1], powers[n - 2], t, &grads[n - 2], &grad_t);
  }
  grad_t += grads[0];
  return grad_t;
}

// ---------------------------------------------------------------------------
// Debug serialization: {"width":d,"depth":M,"levels":[[...],...]}

inline nlohmann::json to_json(const TensorElement& t) {
  nlohmann::json levels = nlohmann::json::array();
  for (int k = 0; k <= t.depth(); ++k) {
    const auto lv = t.level(k);
    levels.push_back(std::vector<double>(lv.begin(), lv.end()));
  }
  return {{"width", t.width()}, {"depth", t.depth()}, {"levels", levels}};
}

inline TensorElement tensor_from_json(const nlohmann::json& j) {
  const int width = j.at("width").get<int>();
  const int depth = j.at("depth").get<int>();
  TensorElement t(width, depth);
  const auto& levels = j.at("levels");
  if (!levels.is_array() || static_cast<int>(levels.size()) != depth + 1) {
    throw ShapeError("tensor JSON must carry depth+1 levels");
  }
  for (int k = 0; k <= depth; ++k) {
    const auto values = levels[k].get<std::vector<double>>();
    auto lv = t.level(k);
    if (values.size() != lv.size()) {
      throw ShapeError("tensor JSON level " + std::to_string(k) + " has " +
                       std::to_string(values.size()) + " entries, expected " + std::to_string(lv.size()));
    }
    std::copy(values.begin(), values.end(), lv.begin());
  }
  return t;
}

}  // namespace logsig
