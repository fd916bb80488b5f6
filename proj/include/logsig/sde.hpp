#pragma once

// Synthetic data for the learning experiment and the M-step Taylor (log-ODE)
// estimator driven by per-segment signatures.
//
// The benchmark equation is
//   dY = (-pi Y + sin(pi t)) dt + Y o dW,   Y_0 = 0   (Stratonovich),
// simulated by Milstein: Y += a dt + b dW + 1/2 b b' dW^2 with b(y) = y.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "logsig/errors.hpp"
#include "logsig/nn.hpp"
#include "logsig/path.hpp"
#include "logsig/rng.hpp"
#include "logsig/tensor.hpp"

namespace logsig {

struct SdeSample {
  Path driver;  ///< channels (t, W_t)
  double terminal = 0.0;
  std::uint64_t seed = 0;
};

struct Example2Options {
  bool zero_noise = false;  ///< force W = 0 (the ODE y' = -pi y + sin(pi t))
  bool drop_forcing = false;  ///< remove the sin(pi t) term
};

/// Scalar Stratonovich Milstein on a uniform grid of [0, T] with drift
/// a(t, y), diffusion b(y) and its derivative db(y).
inline SdeSample simulate_milstein(const std::function<double(double, double)>& drift,
                                   const std::function<double(double)>& diffusion,
                                   const std::function<double(double)>& diffusion_prime, double y0, int steps,
                                   double T, std::uint64_t seed, bool zero_noise = false) {
  if (steps < 1) throw DomainError("simulation needs at least one step");
  if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("horizon T must be positive and finite");
  const double dt = T / steps;
  const double sqdt = std::sqrt(dt);
  Rng rng(seed);
  std::vector<double> times(static_cast<std::size_t>(steps) + 1);
  std::vector<double> values(2 * times.size());
  double y = y0;
  double w = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double t = T * static_cast<double>(i) / steps;
    times[i] = t;
    values[2 * i] = t;
    values[2 * i + 1] = w;
    if (i == steps) break;
    const double dw = zero_noise ? 0.0 : sqdt * rng.normal();
    const double b = diffusion(y);
    y += drift(t, y) * dt + b * dw + 0.5 * b * diffusion_prime(y) * dw * dw;
    w += dw;
  }
  if (!std::isfinite(y)) throw NumericError("simulation produced a non-finite value");
  return {Path(std::move(times), std::move(values), 2), y, seed};
}

inline SdeSample simulate_example2(int steps, double T, std::uint64_t seed, Example2Options opts = {}) {
  constexpr double pi = std::numbers::pi;
  const bool forcing = !opts.drop_forcing;
  return simulate_milstein([forcing](double t, double y) { return -pi * y + (forcing ? std::sin(pi * t) : 0.0); },
                           [](double y) { return y; }, [](double) { return 1.0; }, 0.0, steps, T, seed,
                           opts.zero_noise);
}

/// Solution of y' = -pi y + sin(pi t), y(0) = 0.
inline double example2_ode_solution(double t) {
  constexpr double pi = std::numbers::pi;
  return (std::sin(pi * t) - std::cos(pi * t) + std::exp(-pi * t)) / (2.0 * pi);
}

// ---------------------------------------------------------------------------

/// Controlled vector fields and their iterated compositions.
/// orders[j-1](y) is f^{oj}(y) as a row-major e x d^j matrix; column index is
/// the word index (first letter = earliest increment, most significant).
struct VectorFieldSet {
  int e = 0;
  int d = 0;
  std::vector<std::function<std::vector<double>(std::span<const double>)>> orders;

  int available_order() const { return static_cast<int>(orders.size()); }

  std::vector<double> evaluate(int j, std::span<const double> y) const {
    if (j < 1 || j > available_order()) {
      throw ConfigError("vector field order " + std::to_string(j) + " not available (have " +
                        std::to_string(available_order()) + ")");
    }
    auto out = orders[static_cast<std::size_t>(j - 1)](y);
    if (out.size() != static_cast<std::size_t>(e) * level_size(d, j)) throw ShapeError("vector field has wrong size");
    return out;
  }
};

/// Linear fields f(y)(x) = sum_a x_a A_a y, so f^{oj}(y)(a_1..a_j) = A_{a_j} ... A_{a_1} y.
inline VectorFieldSet linear_fields(std::vector<Eigen::MatrixXd> A, int max_order) {
  if (A.empty()) throw ShapeError("linear fields need at least one matrix");
  const int e = static_cast<int>(A.front().rows());
  for (const auto& m : A) {
    if (m.rows() != e || m.cols() != e) throw ShapeError("linear field matrices must be square and equal-sized");
  }
  VectorFieldSet vf{e, static_cast<int>(A.size()), {}};
  for (int j = 1; j <= max_order; ++j) {
    vf.orders.push_back([A, j, e](std::span<const double> y) {
      const int d = static_cast<int>(A.size());
      const std::size_t cols = level_size(d, j);
      std::vector<double> out(static_cast<std::size_t>(e) * cols);
      Eigen::Map<const Eigen::VectorXd> y0(y.data(), e);
      for (std::size_t w = 0; w < cols; ++w) {
        // Decode the word; its last letter is the least significant digit.
        Eigen::VectorXd v = y0;
        std::vector<int> letters(static_cast<std::size_t>(j));
        std::size_t rem = w;
        for (int k = j; k-- > 0;) {
          letters[k] = static_cast<int>(rem % d);
          rem /= d;
        }
        for (int k = 0; k < j; ++k) v = A[letters[k]] * v;
        for (int i = 0; i < e; ++i) out[i * cols + w] = v[i];
      }
      return out;
    });
  }
  return vf;
}

/// Fields of the benchmark equation on the state z = (t, y), driven by
/// (t, W); f^{o1}, f^{o2}, f^{o3} in closed form.
inline VectorFieldSet example2_fields() {
  constexpr double pi = std::numbers::pi;
  VectorFieldSet vf{2, 2, {}};
  // f(z)(a): a = 0 is dt, a = 1 is dW.
  vf.orders.push_back([](std::span<const double> z) {
    const double t = z[0], y = z[1];
    return std::vector<double>{1.0, 0.0, -pi * y + std::sin(pi * t), y};
  });
  // f^{o2}_y(a, b) = D g_b . F_a with g_0 = -pi y + sin(pi t), g_1 = y.
  vf.orders.push_back([](std::span<const double> z) {
    const double t = z[0], y = z[1];
    const double g0 = -pi * y + std::sin(pi * t);
    const double ds = pi * std::cos(pi * t);
    std::vector<double> out(8, 0.0);
    out[4 + 0] = ds - pi * g0;  // (0, 0)
    out[4 + 1] = g0;            // (0, 1)
    out[4 + 2] = -pi * y;       // (1, 0)
    out[4 + 3] = y;             // (1, 1)
    return out;
  });
  vf.orders.push_back([](std::span<const double> z) {
    const double t = z[0], y = z[1];
    const double g0 = -pi * y + std::sin(pi * t);
    const double ds = pi * std::cos(pi * t);
    const double dds = -pi * pi * std::sin(pi * t);
    // Partials (d/dt, d/dy) of h_bc = f^{o2}_y(b, c).
    const double ht[4] = {dds - pi * ds, ds, 0.0, 0.0};
    const double hy[4] = {pi * pi, -pi, -pi, 1.0};
    std::vector<double> out(16, 0.0);
    for (int bc = 0; bc < 4; ++bc) {
      out[8 + bc] = ht[bc] + hy[bc] * g0;  // a = 0: F_0 = (1, g0)
      out[8 + 4 + bc] = hy[bc] * y;        // a = 1: F_1 = (0, y)
    }
    return out;
  });
  return vf;
}

/// Recursive M-step Taylor expansion pasted over the segments:
/// Y <- Y + sum_{j<=M} f^{oj}(Y) X^j, with X^j the level-j signature terms.
inline std::vector<double> taylor_estimate(const VectorFieldSet& vf, std::vector<double> y0,
                                           const std::vector<TensorElement>& segment_signatures, int M) {
  if (M < 1) throw ConfigError("Taylor order must be >= 1");
  if (M > vf.available_order()) {
    throw ConfigError("Taylor order " + std::to_string(M) + " exceeds available vector field derivatives (" +
                      std::to_string(vf.available_order()) + ")");
  }
  if (y0.size() != static_cast<std::size_t>(vf.e)) throw ShapeError("initial value has the wrong dimension");
  std::vector<double> y = std::move(y0);
  for (const auto& s : segment_signatures) {
    if (s.width() != vf.d || s.depth() < M) throw ShapeError("segment signature does not match the vector fields");
    std::vector<double> next = y;
    for (int j = 1; j <= M; ++j) {
      const auto f = vf.evaluate(j, y);
      const auto x = s.level(j);
      for (int i = 0; i < vf.e; ++i) {
        double acc = 0.0;
        for (std::size_t w = 0; w < x.size(); ++w) acc += f[i * x.size() + w] * x[w];
        next[i] += acc;
      }
    }
    y = std::move(next);
  }
  return y;
}

/// Per-segment signatures of x over its N-segment partition, at depth M.
inline std::vector<TensorElement> partition_signatures(const Path& x, std::size_t N, int M) {
  const auto part = make_partition(x, N);
  std::vector<TensorElement> out;
  out.reserve(N);
  for (std::size_t k = 0; k < N; ++k) out.push_back(segment_signature(x, part.boundaries[k], part.boundaries[k + 1], M));
  return out;
}

// ---------------------------------------------------------------------------

struct SdeDataset {
  Dataset train;
  Dataset test;
  std::vector<std::uint64_t> train_seeds;
  std::vector<std::uint64_t> test_seeds;
};

/// Seed of sample i under a base seed.
inline std::uint64_t sample_seed(std::uint64_t base, std::size_t i) { return Rng::derive(base, i).next_u64(); }

/// Independent samples of the benchmark equation; the first floor(split*count)
/// go to training.
inline SdeDataset gen_dataset(std::size_t count, int steps, double T, std::uint64_t seed, double split = 0.8) {
  if (!(split > 0.0 && split < 1.0)) throw DomainError("split must lie strictly between 0 and 1");
  const auto n_train = static_cast<std::size_t>(std::floor(split * static_cast<double>(count)));
  if (n_train == 0 || n_train >= count) {
    throw DomainError("split of " + std::to_string(count) + " samples leaves an empty train or test set");
  }
  SdeDataset out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = sample_seed(seed, i);
    SdeSample sample = simulate_example2(steps, T, s);
    const bool is_train = i < n_train;
    Dataset& d = is_train ? out.train : out.test;
    d.inputs.push_back(std::move(sample.driver));
    d.targets.push_back(Eigen::VectorXd::Constant(1, sample.terminal));
    (is_train ? out.train_seeds : out.test_seeds).push_back(s);
  }
  return out;
}

/// Writes one CSV per driver plus manifest.json mapping file -> (target, split).
inline void write_dataset(const std::filesystem::path& dir, const SdeDataset& data, const nlohmann::json& meta = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  nlohmann::json files = nlohmann::json::array();
  std::size_t index = 0;
  auto emit = [&](const Dataset& d, const std::vector<std::uint64_t>& seeds, const char* split) {
    for (std::size_t i = 0; i < d.size(); ++i, ++index) {
      char name[32];
      std::snprintf(name, sizeof name, "sample_%05zu.csv", index);
      std::ofstream os(dir / name);
      if (!os) throw DataError("cannot write " + (dir / name).string());
      write_path_csv(os, d.inputs[i]);
      nlohmann::json entry{{"file", name}, {"split", split}};
      entry["target"] = std::vector<double>(d.targets[i].data(), d.targets[i].data() + d.targets[i].size());
      if (i < seeds.size()) entry["seed"] = seeds[i];
      files.push_back(entry);
    }
  };
  emit(data.train, data.train_seeds, "train");
  emit(data.test, data.test_seeds, "test");
  nlohmann::json manifest{{"format", "logsig-dataset-v1"}, {"meta", meta}, {"samples", files}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw DataError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

inline SdeDataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream is(manifest_path);
  if (!is) throw DataError("dataset manifest not found: " + manifest_path.string());
  SdeDataset out;
  try {
    const auto manifest = nlohmann::json::parse(is);
    for (const auto& entry : manifest.at("samples")) {
      const auto file = dir / entry.at("file").get<std::string>();
      std::ifstream csv(file);
      if (!csv) throw DataError("dataset file not found: " + file.string());
      Path p = read_path_csv(csv);
      const auto target = entry.at("target").get<std::vector<double>>();
      const bool is_train = entry.at("split").get<std::string>() == "train";
      Dataset& d = is_train ? out.train : out.test;
      d.inputs.push_back(std::move(p));
      d.targets.push_back(Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size())));
      (is_train ? out.train_seeds : out.test_seeds).push_back(entry.value("seed", std::uint64_t{0}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  out.train.validate();
  out.test.validate();
  return out;
}

}  // namespace logsig
