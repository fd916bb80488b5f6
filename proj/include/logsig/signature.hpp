#pragma once

// Signatures and log-signatures of piecewise-linear paths, the log-signature
// sequence layer over a coarse partition, and its vector-Jacobian product.
//
// A linear piece with increment v has signature exp(v); a piecewise-linear
// path has the ordered product of those (Chen). Backward passes retrace the
// same stages: increment -> exp -> Chen products -> tensor log -> Lyndon solve.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "logsig/errors.hpp"
#include "logsig/lie.hpp"
#include "logsig/path.hpp"
#include "logsig/tensor.hpp"

namespace logsig {

/// Signature of rows [begin, end] of x (inclusive), truncated at depth.
inline TensorElement segment_signature(const Path& x, std::size_t begin, std::size_t end, int depth) {
  const int w = x.width();
  TensorElement s = TensorElement::unit(w, depth);
  std::vector<double> inc(static_cast<std::size_t>(w));
  for (std::size_t i = begin; i < end; ++i) {
    for (int c = 0; c < w; ++c) inc[c] = x.at(i + 1, c) - x.at(i, c);
    mul_exp_increment_inplace(s, inc);
  }
  // Level 1 telescopes; store it exactly.
  for (int c = 0; c < w; ++c) s.level(1)[c] = x.at(end, c) - x.at(begin, c);
  return s;
}

inline TensorElement signature(const Path& x, int depth) {
  return segment_signature(x, 0, x.length() - 1, depth);
}

inline LieCoords log_signature(const Path& x, int depth) {
  return lie_project(tensor_log(signature(x, depth)));
}

/// Adjoint of segment_signature: accumulates into grad_x (row-major n x d,
/// indexed by absolute row).
inline void segment_signature_vjp(const Path& x, std::size_t begin, std::size_t end, const TensorElement& grad_sig,
                                  std::span<double> grad_x) {
  const int w = x.width();
  const int depth = grad_sig.depth();
  const std::size_t m = end - begin;
  if (m == 0) return;
  std::vector<std::vector<double>> incs(m, std::vector<double>(static_cast<std::size_t>(w)));
  for (std::size_t j = 0; j < m; ++j) {
    for (int c = 0; c < w; ++c) incs[j][c] = x.at(begin + j + 1, c) - x.at(begin + j, c);
  }
  // prefix[j] = exp(v_0) ... exp(v_j)
  std::vector<TensorElement> prefix;
  prefix.reserve(m);
  prefix.push_back(exp_increment(depth, incs[0]));
  for (std::size_t j = 1; j < m; ++j) {
    TensorElement next = prefix.back();
    mul_exp_increment_inplace(next, incs[j]);
    prefix.push_back(std::move(next));
  }
  TensorElement grad = grad_sig;
  std::vector<double> grad_inc(static_cast<std::size_t>(w));
  auto scatter = [&](std::size_t j) {
    for (int c = 0; c < w; ++c) {
      grad_x[(begin + j + 1) * w + c] += grad_inc[c];
      grad_x[(begin + j) * w + c] -= grad_inc[c];
    }
  };
  for (std::size_t j = m; j-- > 1;) {
    const TensorElement e = exp_increment(depth, incs[j]);
    TensorElement grad_prev(w, depth);
    TensorElement grad_e(w, depth);
    tensor_mul_vjp(grad, prefix[j - 1], e, &grad_prev, &grad_e);
    std::fill(grad_inc.begin(), grad_inc.end(), 0.0);
    exp_increment_vjp(incs[j], grad_e, grad_inc);
    scatter(j);
    grad = std::move(grad_prev);
  }
  std::fill(grad_inc.begin(), grad_inc.end(), 0.0);
  exp_increment_vjp(incs[0], grad, grad_inc);
  scatter(0);
}

/// Per-segment truncated log-signatures; row k covers [u_k, u_{k+1}].
struct LogsigSequence {
  CoarsePartition partition;
  int width = 0;  ///< width of the path the features were computed from
  int depth = 0;
  std::size_t dim = 0;          ///< columns: logsig_dim(width, depth)
  std::vector<double> features;  ///< row-major segments() x dim

  std::size_t segments() const { return partition.segments(); }
  std::span<const double> row(std::size_t k) const { return {features.data() + k * dim, dim}; }
};

inline LogsigSequence logsig_sequence(const Path& x, const CoarsePartition& partition, int depth) {
  partition.validate(x);
  const auto basis = cached_basis(x.width(), depth);
  LogsigSequence out{partition, x.width(), depth, basis->size(), {}};
  out.features.reserve(partition.segments() * out.dim);
  for (std::size_t k = 0; k < partition.segments(); ++k) {
    const auto& b = partition.boundaries;
    if (b[k + 1] <= b[k]) throw Error("internal error: empty partition segment");
    const auto coords = lie_project(tensor_log(segment_signature(x, b[k], b[k + 1], depth))).coords;
    out.features.insert(out.features.end(), coords.begin(), coords.end());
  }
  return out;
}

/// Gradient with respect to the path samples (row-major n x d) of
/// sum_k <upstream_k, l_k>. Boundary samples collect both adjacent segments.
inline std::vector<double> logsig_sequence_vjp(const Path& x, const CoarsePartition& partition, int depth,
                                               std::span<const double> upstream) {
  partition.validate(x);
  const auto basis = cached_basis(x.width(), depth);
  const std::size_t dim = basis->size();
  if (upstream.size() != partition.segments() * dim) {
    throw ShapeError("upstream gradient has " + std::to_string(upstream.size()) + " entries, expected " +
                     std::to_string(partition.segments()) + " x " + std::to_string(dim));
  }
  std::vector<double> grad(x.length() * static_cast<std::size_t>(x.width()), 0.0);
  for (std::size_t k = 0; k < partition.segments(); ++k) {
    const auto g = upstream.subspan(k * dim, dim);
    bool any = false;
    for (double v : g) any = any || v != 0.0;
    if (!any) continue;
    const auto& b = partition.boundaries;
    const TensorElement sig = segment_signature(x, b[k], b[k + 1], depth);
    const TensorElement grad_log = basis->solve_vjp(g);
    const TensorElement grad_sig = tensor_log_vjp(sig, grad_log);
    segment_signature_vjp(x, b[k], b[k + 1], grad_sig, grad);
  }
  return grad;
}

/// Size of a signature without its scalar term.
inline std::size_t sig_dim(int width, int depth) {
  std::size_t n = 0;
  for (int k = 1; k <= depth; ++k) n += level_size(width, k);
  return n;
}

/// Per-segment signatures without the scalar term, row-major segments x sig_dim.
inline std::vector<double> sig_sequence(const Path& x, const CoarsePartition& partition, int depth) {
  partition.validate(x);
  std::vector<double> out;
  out.reserve(partition.segments() * sig_dim(x.width(), depth));
  for (std::size_t k = 0; k < partition.segments(); ++k) {
    const auto s = segment_signature(x, partition.boundaries[k], partition.boundaries[k + 1], depth);
    out.insert(out.end(), s.data().begin() + 1, s.data().end());
  }
  return out;
}

inline std::vector<double> sig_sequence_vjp(const Path& x, const CoarsePartition& partition, int depth,
                                            std::span<const double> upstream) {
  partition.validate(x);
  const std::size_t dim = sig_dim(x.width(), depth);
  if (upstream.size() != partition.segments() * dim) {
    throw ShapeError("upstream gradient has " + std::to_string(upstream.size()) + " entries, expected " +
                     std::to_string(partition.segments()) + " x " + std::to_string(dim));
  }
  std::vector<double> grad(x.length() * static_cast<std::size_t>(x.width()), 0.0);
  for (std::size_t k = 0; k < partition.segments(); ++k) {
    TensorElement g(x.width(), depth);
    std::copy_n(upstream.begin() + static_cast<std::ptrdiff_t>(k * dim), dim, g.data().begin() + 1);
    segment_signature_vjp(x, partition.boundaries[k], partition.boundaries[k + 1], g, grad);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Shuffle product on words.

using WordSum = std::map<Word, std::int64_t>;

/// All riffle interleavings of u and v, with multiplicity.
inline WordSum shuffle(const Word& u, const Word& v) {
  if (u.empty()) return {{v, 1}};
  if (v.empty()) return {{u, 1}};
  WordSum out;
  // ua' sh vb' = (u' sh vb') a + (ua' sh v') b, peeling the last letters.
  const Word u_head(u.begin(), u.end() - 1);
  const Word v_head(v.begin(), v.end() - 1);
  for (const auto& [w, c] : shuffle(u_head, v)) {
    Word x = w;
    x.push_back(u.back());
    out[x] += c;
  }
  for (const auto& [w, c] : shuffle(u, v_head)) {
    Word x = w;
    x.push_back(v.back());
    out[x] += c;
  }
  return out;
}

/// <w, S>: the coefficient of word w in S (the empty word reads the scalar).
inline double coefficient(const TensorElement& s, const Word& w) {
  return s.level(static_cast<int>(w.size()))[word_index(w, s.width())];
}

inline double coefficient(const TensorElement& s, const WordSum& sum) {
  double total = 0.0;
  for (const auto& [w, c] : sum) total += static_cast<double>(c) * coefficient(s, w);
  return total;
}

}  // namespace logsig
