#pragma once

// Discrete paths (time-stamped samples, read as their piecewise-linear
// interpolation), coarse partitions, path transforms and p-variation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "logsig/errors.hpp"
#include "logsig/rng.hpp"

namespace logsig {

class Path {
 public:
  Path() = default;

  /// values is row-major n x width.
  Path(std::vector<double> times, std::vector<double> values, int width)
      : times_(std::move(times)), values_(std::move(values)), width_(width) {
    if (width_ < 1) throw ShapeError("path width must be positive");
    if (times_.empty()) throw ShapeError("path needs at least one sample");
    if (values_.size() != times_.size() * static_cast<std::size_t>(width_)) {
      throw ShapeError("path has " + std::to_string(times_.size()) + " times but " +
                       std::to_string(values_.size()) + " values for width " + std::to_string(width_));
    }
    for (std::size_t i = 0; i < times_.size(); ++i) {
      if (!std::isfinite(times_[i])) throw DomainError("non-finite time at row " + std::to_string(i));
      if (i > 0 && !(times_[i] > times_[i - 1])) {
        throw DomainError("path times must be strictly increasing (row " + std::to_string(i) + ")");
      }
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw DomainError("path contains a non-finite value");
    }
  }

  /// Samples at times 0, 1, ..., n-1.
  static Path from_values(std::vector<double> values, int width) {
    const std::size_t n = values.size() / static_cast<std::size_t>(width);
    std::vector<double> times(n);
    std::iota(times.begin(), times.end(), 0.0);
    return Path(std::move(times), std::move(values), width);
  }

  std::size_t length() const { return times_.size(); }
  int width() const { return width_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }
  double time(std::size_t i) const { return times_[i]; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(width_), static_cast<std::size_t>(width_)};
  }
  double at(std::size_t i, int c) const { return values_[i * static_cast<std::size_t>(width_) + c]; }

  /// Rows [begin, end] inclusive.
  Path slice(std::size_t begin, std::size_t end) const {
    const auto w = static_cast<std::size_t>(width_);
    return Path(std::vector<double>(times_.begin() + begin, times_.begin() + end + 1),
                std::vector<double>(values_.begin() + begin * w, values_.begin() + (end + 1) * w), width_);
  }

  /// Linear interpolation at time t in [t_1, t_n].
  std::vector<double> interpolate(double t) const {
    if (t < times_.front() || t > times_.back()) {
      throw DomainError("interpolation time " + std::to_string(t) + " outside path range");
    }
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    if (hi >= times_.size()) return {row(times_.size() - 1).begin(), row(times_.size() - 1).end()};
    const std::size_t lo = hi - 1;
    std::vector<double> out(row(lo).begin(), row(lo).end());
    if (t == times_[lo]) return out;
    const double s = (t - times_[lo]) / (times_[hi] - times_[lo]);
    for (int c = 0; c < width_; ++c) out[c] += s * (at(hi, c) - at(lo, c));
    return out;
  }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  int width_ = 0;
};

/// Boundary sample indices u_0 < ... < u_N into a path, u_0 = 0, u_N = n - 1.
struct CoarsePartition {
  std::vector<std::size_t> boundaries;

  std::size_t segments() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }

  void validate(const Path& x) const {
    if (boundaries.size() < 2) throw DomainError("partition needs at least one segment");
    if (boundaries.front() != 0 || boundaries.back() != x.length() - 1) {
      throw DomainError("partition must start at the first sample and end at the last");
    }
    for (std::size_t k = 1; k < boundaries.size(); ++k) {
      if (boundaries[k] <= boundaries[k - 1]) throw DomainError("partition boundaries must be strictly increasing");
    }
  }
};

// ---------------------------------------------------------------------------

/// p-variation of the piecewise-linear path. The supremum is reached on a
/// subset of the vertices; O(n^2) dynamic programme over them.
inline double p_variation(const Path& x, double p) {
  if (!(p >= 1.0)) throw DomainError("p-variation requires p >= 1");
  const std::size_t n = x.length();
  if (n < 2) throw DomainError("p-variation requires at least two samples");
  auto dist_p = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (int c = 0; c < x.width(); ++c) {
      const double d = x.at(j, c) - x.at(i, c);
      s += d * d;
    }
    return std::pow(std::sqrt(s), p);
  };
  std::vector<double> best(n, 0.0);
  for (std::size_t j = 1; j < n; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < j; ++i) m = std::max(m, best[i] + dist_p(i, j));
    best[j] = m;
  }
  return std::pow(best[n - 1], 1.0 / p);
}

/// Prepends the normalised time (t_i - t_1) / (t_n - t_1) as channel 0.
inline Path time_incorporate(const Path& x) {
  const std::size_t n = x.length();
  const int w = x.width() + 1;
  const double span = x.times().back() - x.times().front();
  std::vector<double> values(n * static_cast<std::size_t>(w));
  for (std::size_t i = 0; i < n; ++i) {
    values[i * w] = span > 0.0 ? (x.time(i) - x.times().front()) / span : 0.0;
    std::copy(x.row(i).begin(), x.row(i).end(), values.begin() + static_cast<std::ptrdiff_t>(i * w + 1));
  }
  return Path(x.times(), std::move(values), w);
}

/// Partial sums y_i = sum_{j <= i} x_j.
inline Path accumulate(const Path& x) {
  std::vector<double> values = x.values();
  const auto w = static_cast<std::size_t>(x.width());
  for (std::size_t i = 1; i < x.length(); ++i) {
    for (std::size_t c = 0; c < w; ++c) values[i * w + c] += values[(i - 1) * w + c];
  }
  return Path(x.times(), std::move(values), x.width());
}

/// Rows i >= 1 hold x_i - x_{i-1}; row 0 is x_0 (inverse of accumulate).
inline Path first_differences(const Path& x) {
  std::vector<double> values = x.values();
  const auto w = static_cast<std::size_t>(x.width());
  for (std::size_t i = x.length(); i-- > 1;) {
    for (std::size_t c = 0; c < w; ++c) values[i * w + c] -= values[(i - 1) * w + c];
  }
  return Path(x.times(), std::move(values), x.width());
}

/// How dropped samples are represented.
enum class MissingMode {
  remove,     ///< delete the row; the interpolation bridges the gap
  zero_fill,  ///< keep the time stamp, set the values to zero
};

/// Sorted indices of the interior rows removed by drop_points.
inline std::vector<std::size_t> dropped_rows(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("drop ratio must lie in [0, 1)");
  const std::size_t interior = n > 2 ? n - 2 : 0;
  const std::size_t count = std::min(static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n))), interior);
  // Partial Fisher-Yates over the interior indices 1..n-2.
  std::vector<std::size_t> pool(interior);
  std::iota(pool.begin(), pool.end(), std::size_t{1});
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(interior - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::size_t> out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.begin(), out.end());
  return out;
}

/// Removes floor(ratio * n) interior samples chosen uniformly; endpoints stay.
inline Path drop_points(const Path& x, double ratio, std::uint64_t seed, MissingMode mode = MissingMode::remove) {
  const auto drop = dropped_rows(x.length(), ratio, seed);
  const auto w = static_cast<std::size_t>(x.width());
  if (mode == MissingMode::zero_fill) {
    std::vector<double> values = x.values();
    for (std::size_t r : drop) std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(r * w), w, 0.0);
    return Path(x.times(), std::move(values), x.width());
  }
  std::vector<double> times;
  std::vector<double> values;
  times.reserve(x.length() - drop.size());
  values.reserve((x.length() - drop.size()) * w);
  std::size_t next = 0;
  for (std::size_t i = 0; i < x.length(); ++i) {
    if (next < drop.size() && drop[next] == i) {
      ++next;
      continue;
    }
    times.push_back(x.time(i));
    values.insert(values.end(), x.row(i).begin(), x.row(i).end());
  }
  return Path(std::move(times), std::move(values), x.width());
}

/// Resamples the same trajectory at the union of the original sample times and
/// `extra_times` (all inside [t_1, t_n]), then relabels time through `warp`,
/// which must be strictly increasing on the sample set.
inline Path reparameterize(const Path& x, std::span<const double> extra_times,
                           const std::function<double(double)>& warp) {
  std::vector<double> params(x.times());
  for (double t : extra_times) {
    if (t < x.times().front() || t > x.times().back()) {
      throw DomainError("reparameterization sample " + std::to_string(t) + " outside path range");
    }
    params.push_back(t);
  }
  std::sort(params.begin(), params.end());
  params.erase(std::unique(params.begin(), params.end()), params.end());
  std::vector<double> times;
  std::vector<double> values;
  times.reserve(params.size());
  for (double s : params) {
    const double t = warp(s);
    if (!std::isfinite(t) || (!times.empty() && !(t > times.back()))) {
      throw DomainError("time warp is not strictly increasing");
    }
    times.push_back(t);
    const auto v = x.interpolate(s);
    values.insert(values.end(), v.begin(), v.end());
  }
  return Path(std::move(times), std::move(values), x.width());
}

/// Boundaries snapped to the samples nearest the N+1 uniform times over
/// [t_1, t_n]. Collisions are resolved by shifting to the closest free index,
/// so the partition always has exactly N segments.
inline CoarsePartition make_partition(const Path& x, std::size_t segments) {
  const std::size_t n = x.length();
  if (segments < 1) throw DomainError("partition needs at least one segment");
  if (n < 2 || segments > n - 1) {
    throw DomainError("cannot split " + std::to_string(n) + " samples into " + std::to_string(segments) +
                      " segments");
  }
  const auto& t = x.times();
  const double t0 = t.front();
  const double span = t.back() - t0;
  CoarsePartition part;
  part.boundaries.resize(segments + 1);
  for (std::size_t k = 0; k <= segments; ++k) {
    const double target = t0 + span * static_cast<double>(k) / static_cast<double>(segments);
    auto it = std::lower_bound(t.begin(), t.end(), target);
    std::size_t idx = static_cast<std::size_t>(it - t.begin());
    if (idx == n) idx = n - 1;
    if (idx > 0 && (target - t[idx - 1]) <= (t[idx] - target)) idx = idx - 1;
    part.boundaries[k] = idx;
  }
  part.boundaries.front() = 0;
  part.boundaries.back() = n - 1;
  // Strictly increasing, leaving room for the remaining boundaries.
  for (std::size_t k = 1; k < segments; ++k) {
    part.boundaries[k] = std::clamp(part.boundaries[k], part.boundaries[k - 1] + 1, n - 1 - (segments - k));
  }
  return part;
}

/// Keeps only the samples at the boundaries of make_partition(x, steps).
inline Path downsample(const Path& x, std::size_t steps) {
  const auto part = make_partition(x, steps);
  std::vector<double> times;
  std::vector<double> values;
  for (std::size_t i : part.boundaries) {
    times.push_back(x.time(i));
    values.insert(values.end(), x.row(i).begin(), x.row(i).end());
  }
  return Path(std::move(times), std::move(values), x.width());
}

// ---------------------------------------------------------------------------
// CSV: header `time,x1,...,xd`, one row per sample.

inline Path read_path_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty path CSV");
  int width = -1;
  {
    std::stringstream header(line);
    std::string cell;
    int cols = 0;
    while (std::getline(header, cell, ',')) ++cols;
    width = cols - 1;
  }
  if (width < 1) throw DataError("path CSV header must be `time,x1,...,xd`");
  std::vector<double> times;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int col = 0;
    while (std::getline(row, cell, ',')) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw DataError("path CSV line " + std::to_string(lineno) + ": cannot parse `" + cell + "`");
      }
      if (col == 0) {
        times.push_back(v);
      } else {
        values.push_back(v);
      }
      ++col;
    }
    if (col != width + 1) {
      throw DataError("path CSV line " + std::to_string(lineno) + " has " + std::to_string(col) +
                      " columns, expected " + std::to_string(width + 1));
    }
  }
  if (times.empty()) throw DataError("path CSV has no samples");
  try {
    return Path(std::move(times), std::move(values), width);
  } catch (const Error& e) {
    throw DataError(std::string("invalid path CSV: ") + e.what());
  }
}

inline void write_path_csv(std::ostream& out, const Path& x) {
  out << "time";
  for (int c = 1; c <= x.width(); ++c) out << ",x" << c;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < x.length(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", x.time(i));
    out << buf;
    for (double v : x.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace logsig
