#pragma once

// Trainable models on paths: a plain recurrent cell, the Logsig-RNN
// (path transforms -> log-signature sequence -> RNN) and the baselines it is
// compared against (RNN on raw increments, linear model on the signature,
// RNN on per-segment signatures). Gradients are hand-derived per stage and
// flow through logsig_sequence_vjp whenever a trainable embedding precedes
// the feature layer.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "logsig/errors.hpp"
#include "logsig/lie.hpp"
#include "logsig/path.hpp"
#include "logsig/rng.hpp"
#include "logsig/signature.hpp"

namespace logsig {

enum class Activation { tanh, identity };

enum class ModelKind {
  logsig_rnn,  ///< RNN over per-segment log-signatures
  rnn0,        ///< RNN over increments of the downsampled path
  sig_olr,     ///< linear regression on the flat signature
  sig_rnn,     ///< RNN over per-segment signatures
};

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logsig_rnn: return "logsig_rnn";
    case ModelKind::rnn0: return "rnn0";
    case ModelKind::sig_olr: return "sig_olr";
    case ModelKind::sig_rnn: return "sig_rnn";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "logsig_rnn") return ModelKind::logsig_rnn;
  if (s == "rnn0") return ModelKind::rnn0;
  if (s == "sig_olr") return ModelKind::sig_olr;
  if (s == "sig_rnn") return ModelKind::sig_rnn;
  throw ConfigError("unknown model `" + s + "` (expected logsig_rnn, rnn0, sig_olr or sig_rnn)");
}

/// One path transformation layer.
struct TransformSpec {
  enum class Kind { embed, time_incorporate, accumulate };
  Kind kind = Kind::time_incorporate;
  int dim = 0;  ///< output width of an embedding

  static TransformSpec parse(const std::string& s) {
    if (s == "time" || s == "time_incorporate") return {Kind::time_incorporate, 0};
    if (s == "accumulate") return {Kind::accumulate, 0};
    if (s.rfind("embed:", 0) == 0) {
      const int d = std::stoi(s.substr(6));
      if (d < 1) throw ConfigError("embedding width must be positive");
      return {Kind::embed, d};
    }
    throw ConfigError("unknown transform `" + s + "` (expected time, accumulate or embed:<width>)");
  }

  std::string str() const {
    switch (kind) {
      case Kind::embed: return "embed:" + std::to_string(dim);
      case Kind::time_incorporate: return "time";
      case Kind::accumulate: return "accumulate";
    }
    return "?";
  }
};

struct ModelConfig {
  ModelKind model = ModelKind::logsig_rnn;
  int depth = 2;     ///< truncation degree M
  int segments = 4;  ///< coarse partition size N
  int hidden = 64;   ///< RNN width H
  std::vector<TransformSpec> transforms;
  Activation activation = Activation::tanh;
  bool start_point = false;  ///< append the segment start point to each feature row
  int rnn0_steps = 64;       ///< increments fed to rnn0 after downsampling; 0 keeps every increment
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 500;
  int batch_size = 64;

  void validate() const {
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (segments < 1) throw ConfigError("segments must be >= 1");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (rnn0_steps < 0) throw ConfigError("rnn0_steps must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (model == ModelKind::sig_olr) {
      for (const auto& t : transforms) {
        if (t.kind == TransformSpec::Kind::embed) {
          throw ConfigError("sig_olr is fitted in closed form and cannot carry a trainable embedding");
        }
      }
    }
  }

  bool has_embedding() const {
    return std::any_of(transforms.begin(), transforms.end(),
                       [](const TransformSpec& t) { return t.kind == TransformSpec::Kind::embed; });
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  std::vector<std::string> transforms;
  for (const auto& t : c.transforms) transforms.push_back(t.str());
  return {{"model", to_string(c.model)},
          {"depth", c.depth},
          {"segments", c.segments},
          {"hidden", c.hidden},
          {"transforms", transforms},
          {"activation", c.activation == Activation::tanh ? "tanh" : "identity"},
          {"start_point", c.start_point},
          {"rnn0_steps", c.rnn0_steps},
          {"seed", c.seed},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size}};
}

/// Missing keys keep their defaults.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("model")) c.model = model_kind_from_string(j.at("model").get<std::string>());
    c.depth = j.value("depth", c.depth);
    c.segments = j.value("segments", c.segments);
    c.hidden = j.value("hidden", c.hidden);
    if (j.contains("transforms")) {
      for (const auto& t : j.at("transforms")) c.transforms.push_back(TransformSpec::parse(t.get<std::string>()));
    }
    if (j.contains("activation")) {
      const auto a = j.at("activation").get<std::string>();
      if (a == "tanh") {
        c.activation = Activation::tanh;
      } else if (a == "identity") {
        c.activation = Activation::identity;
      } else {
        throw ConfigError("unknown activation `" + a + "`");
      }
    }
    c.start_point = j.value("start_point", c.start_point);
    c.rnn0_steps = j.value("rnn0_steps", c.rnn0_steps);
    c.seed = j.value("seed", c.seed);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Recurrent cell: h_t = act(U x_t + W h_{t-1} + b), output V h_T + c, h_0 = 0.

struct RnnParams {
  Eigen::MatrixXd U;  ///< hidden x input
  Eigen::MatrixXd W;  ///< hidden x hidden
  Eigen::MatrixXd V;  ///< output x hidden
  Eigen::VectorXd b;  ///< hidden bias
  Eigen::VectorXd c;  ///< output bias
  Activation activation = Activation::tanh;

  static RnnParams zeros(int input, int hidden, int output, Activation act = Activation::tanh) {
    return {Eigen::MatrixXd::Zero(hidden, input), Eigen::MatrixXd::Zero(hidden, hidden),
            Eigen::MatrixXd::Zero(output, hidden), Eigen::VectorXd::Zero(hidden),
            Eigen::VectorXd::Zero(output), act};
  }

  Eigen::Index input_size() const { return U.cols(); }
  Eigen::Index hidden_size() const { return U.rows(); }
  Eigen::Index output_size() const { return V.rows(); }
};

/// Hidden states of a batched forward pass, h[0] = 0.
struct RnnTape {
  std::vector<Eigen::MatrixXd> h;
};

/// xs[t] is input x batch. Returns output x batch.
inline Eigen::MatrixXd rnn_forward_batch(const RnnParams& p, const std::vector<Eigen::MatrixXd>& xs,
                                         RnnTape* tape = nullptr) {
  if (xs.empty()) throw ShapeError("RNN needs at least one time step");
  const Eigen::Index batch = xs.front().cols();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p.hidden_size(), batch);
  if (tape) {
    tape->h.clear();
    tape->h.reserve(xs.size() + 1);
    tape->h.push_back(h);
  }
  for (const auto& x : xs) {
    if (x.rows() != p.input_size() || x.cols() != batch) {
      throw ShapeError("RNN input has " + std::to_string(x.rows()) + " features, expected " +
                       std::to_string(p.input_size()));
    }
    Eigen::MatrixXd a = p.U * x + p.W * h;
    a.colwise() += p.b;
    h = p.activation == Activation::tanh ? Eigen::MatrixXd(a.array().tanh()) : a;
    if (tape) tape->h.push_back(h);
  }
  Eigen::MatrixXd out = p.V * h;
  out.colwise() += p.c;
  return out;
}

/// Last output for one sequence given as time x input.
inline Eigen::VectorXd rnn_forward(const RnnParams& p, const Eigen::MatrixXd& seq) {
  std::vector<Eigen::MatrixXd> xs;
  xs.reserve(static_cast<std::size_t>(seq.rows()));
  for (Eigen::Index t = 0; t < seq.rows(); ++t) xs.emplace_back(seq.row(t).transpose());
  return rnn_forward_batch(p, xs).col(0);
}

/// Backpropagation through time. Accumulates into grads; g_xs (optional)
/// receives the gradient with respect to each input step.
inline void rnn_backward_batch(const RnnParams& p, const std::vector<Eigen::MatrixXd>& xs, const RnnTape& tape,
                               const Eigen::MatrixXd& grad_out, RnnParams& grads,
                               std::vector<Eigen::MatrixXd>* g_xs = nullptr) {
  const std::size_t steps = xs.size();
  grads.V.noalias() += grad_out * tape.h[steps].transpose();
  grads.c += grad_out.rowwise().sum();
  Eigen::MatrixXd gh = p.V.transpose() * grad_out;
  if (g_xs) g_xs->assign(steps, Eigen::MatrixXd());
  for (std::size_t t = steps; t-- > 0;) {
    const Eigen::MatrixXd& h = tape.h[t + 1];
    Eigen::MatrixXd ga =
        p.activation == Activation::tanh ? Eigen::MatrixXd(gh.array() * (1.0 - h.array().square())) : gh;
    grads.U.noalias() += ga * xs[t].transpose();
    grads.W.noalias() += ga * tape.h[t].transpose();
    grads.b += ga.rowwise().sum();
    if (g_xs) (*g_xs)[t] = p.U.transpose() * ga;
    gh = p.W.transpose() * ga;
  }
}

// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<Path> inputs;
  std::vector<Eigen::VectorXd> targets;

  std::size_t size() const { return inputs.size(); }

  void validate() const {
    if (inputs.size() != targets.size()) throw ShapeError("dataset inputs and targets differ in length");
    for (std::size_t i = 1; i < inputs.size(); ++i) {
      if (inputs[i].width() != inputs[0].width() || targets[i].size() != targets[0].size()) {
        throw ShapeError("dataset sample " + std::to_string(i) + " has inconsistent widths");
      }
    }
  }
};

/// Affine per-column standardisation (x - mean) / scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer identity(Eigen::Index n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
  }

  /// Columns of the given matrices are samples; zero spread keeps unit scale.
  static Standardizer fit(const std::vector<Eigen::MatrixXd>& columns) {
    const Eigen::Index n = columns.front().rows();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(n);
    double count = 0.0;
    for (const auto& m : columns) {
      sum += m.rowwise().sum();
      sq += m.array().square().matrix().rowwise().sum();
      count += static_cast<double>(m.cols());
    }
    Standardizer s{sum / count, Eigen::VectorXd::Ones(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const double var = sq[i] / count - s.mean[i] * s.mean[i];
      const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
      s.scale[i] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[i])) ? sd : 1.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const {
    return ((m.colwise() - mean).array().colwise() / scale.array()).matrix();
  }
  Eigen::VectorXd invert(const Eigen::VectorXd& v) const { return (v.array() * scale.array()).matrix() + mean; }
};

/// Path transforms applied by a model, with the intermediate paths kept for
/// the backward pass.
struct TransformTape {
  std::vector<Path> stages;  ///< stages[0] is the input, stages.back() the output
};

class Model {
 public:
  Model() = default;

  Model(ModelConfig cfg, int input_width, int output_width)
      : cfg_(std::move(cfg)), input_width_(input_width), output_width_(output_width) {
    cfg_.validate();
    if (input_width < 1 || output_width < 1) throw ShapeError("model widths must be positive");
    Rng rng(cfg_.seed);
    int width = input_width;
    for (const auto& t : cfg_.transforms) {
      switch (t.kind) {
        case TransformSpec::Kind::embed:
          embeddings_.push_back(glorot(rng, t.dim, width));
          width = t.dim;
          break;
        case TransformSpec::Kind::time_incorporate: width += 1; break;
        case TransformSpec::Kind::accumulate: break;
      }
    }
    path_width_ = width;
    feature_width_ = compute_feature_width();
    if (cfg_.model == ModelKind::sig_olr) {
      olr_weights_ = Eigen::MatrixXd::Zero(output_width, feature_width_);
      olr_bias_ = Eigen::VectorXd::Zero(output_width);
    } else {
      const int h = cfg_.hidden;
      rnn_.U = glorot(rng, h, feature_width_);
      rnn_.W = glorot(rng, h, h);
      rnn_.V = glorot(rng, output_width, h);
      rnn_.b = Eigen::VectorXd::Zero(h);
      rnn_.c = Eigen::VectorXd::Zero(output_width);
      rnn_.activation = cfg_.activation;
    }
    features_ = Standardizer::identity(feature_width_);
    targets_ = Standardizer::identity(output_width);
  }

  const ModelConfig& config() const { return cfg_; }
  int input_width() const { return input_width_; }
  int output_width() const { return output_width_; }
  /// Width of the path entering the feature layer.
  int path_width() const { return path_width_; }
  /// Columns per time step seen by the RNN (or by the linear map for sig_olr).
  int feature_width() const { return feature_width_; }

  RnnParams& rnn() { return rnn_; }
  const RnnParams& rnn() const { return rnn_; }
  std::vector<Eigen::MatrixXd>& embeddings() { return embeddings_; }
  const std::vector<Eigen::MatrixXd>& embeddings() const { return embeddings_; }
  Eigen::MatrixXd& olr_weights() { return olr_weights_; }
  Eigen::VectorXd& olr_bias() { return olr_bias_; }
  Standardizer& feature_scaling() { return features_; }
  const Standardizer& feature_scaling() const { return features_; }
  Standardizer& target_scaling() { return targets_; }
  const Standardizer& target_scaling() const { return targets_; }

  /// The path a model reads before its transforms; rnn0 first downsamples to
  /// rnn0_steps increments. Missing-data experiments drop points from this.
  Path input_path(const Path& x) const {
    if (cfg_.model == ModelKind::rnn0 && cfg_.rnn0_steps > 0 &&
        x.length() > static_cast<std::size_t>(cfg_.rnn0_steps) + 1) {
      return downsample(x, static_cast<std::size_t>(cfg_.rnn0_steps));
    }
    return x;
  }

  Path transform(const Path& x, TransformTape* tape = nullptr) const {
    if (x.width() != input_width_) {
      throw ShapeError("model expects paths of width " + std::to_string(input_width_) + ", got " +
                       std::to_string(x.width()));
    }
    if (tape) tape->stages = {x};
    Path cur = x;
    std::size_t e = 0;
    for (const auto& t : cfg_.transforms) {
      switch (t.kind) {
        case TransformSpec::Kind::embed: cur = embed(cur, embeddings_[e++]); break;
        case TransformSpec::Kind::time_incorporate: cur = time_incorporate(cur); break;
        case TransformSpec::Kind::accumulate: cur = accumulate(cur); break;
      }
      if (tape) tape->stages.push_back(cur);
    }
    return cur;
  }

  /// Raw (unscaled) features of a transformed path, feature_width x steps.
  Eigen::MatrixXd features(const Path& y) const {
    switch (cfg_.model) {
      case ModelKind::logsig_rnn: {
        const auto part = partition_for(y);
        const auto seq = logsig_sequence(y, part, cfg_.depth);
        return with_start_points(rows_to_columns(seq.features, part.segments(), seq.dim), y, part);
      }
      case ModelKind::sig_rnn: {
        const auto part = partition_for(y);
        const auto seq = sig_sequence(y, part, cfg_.depth);
        return with_start_points(rows_to_columns(seq, part.segments(), sig_dim(y.width(), cfg_.depth)), y, part);
      }
      case ModelKind::rnn0: {
        if (y.length() < 2) throw ShapeError("rnn0 needs at least two samples");
        Eigen::MatrixXd out(y.width(), static_cast<Eigen::Index>(y.length() - 1));
        for (std::size_t i = 0; i + 1 < y.length(); ++i) {
          for (int c = 0; c < y.width(); ++c) out(c, static_cast<Eigen::Index>(i)) = y.at(i + 1, c) - y.at(i, c);
        }
        return out;
      }
      case ModelKind::sig_olr: {
        const auto s = signature(y, cfg_.depth);
        Eigen::MatrixXd out(static_cast<Eigen::Index>(s.size() - 1), 1);
        for (std::size_t i = 1; i < s.size(); ++i) out(static_cast<Eigen::Index>(i - 1), 0) = s.data()[i];
        return out;
      }
    }
    throw ConfigError("unknown model kind");
  }

  /// Scaled features of a raw input path.
  Eigen::MatrixXd scaled_features(const Path& input) const { return features_.apply(features(transform(input))); }

  /// Output in normalised target units from scaled features.
  Eigen::VectorXd head(const Eigen::MatrixXd& z) const {
    if (cfg_.model == ModelKind::sig_olr) return olr_weights_ * z.col(0) + olr_bias_;
    std::vector<Eigen::MatrixXd> xs;
    xs.reserve(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index t = 0; t < z.cols(); ++t) xs.emplace_back(z.col(t));
    return rnn_forward_batch(rnn_, xs).col(0);
  }

  /// Prediction in target units for a path already passed through input_path.
  Eigen::VectorXd predict_input(const Path& input) const {
    return targets_.invert(head(scaled_features(input)));
  }

  /// Prediction in target units for a raw sample path.
  Eigen::VectorXd predict(const Path& x) const { return predict_input(input_path(x)); }

  /// Flat views of the trainable parameters (fixed order).
  std::vector<std::span<double>> parameters() { return blocks(rnn_, embeddings_, olr_weights_, olr_bias_); }

  /// Zero gradient buffers shaped like the parameters.
  struct Gradients {
    RnnParams rnn;
    std::vector<Eigen::MatrixXd> embeddings;
    Eigen::MatrixXd olr_weights;
    Eigen::VectorXd olr_bias;

    std::vector<std::span<double>> blocks() { return Model::blocks(rnn, embeddings, olr_weights, olr_bias); }
  };

  Gradients zero_gradients() const {
    Gradients g;
    g.rnn = RnnParams::zeros(static_cast<int>(rnn_.U.cols()), static_cast<int>(rnn_.U.rows()),
                             static_cast<int>(rnn_.V.rows()), rnn_.activation);
    for (const auto& e : embeddings_) g.embeddings.push_back(Eigen::MatrixXd::Zero(e.rows(), e.cols()));
    g.olr_weights = Eigen::MatrixXd::Zero(olr_weights_.rows(), olr_weights_.cols());
    g.olr_bias = Eigen::VectorXd::Zero(olr_bias_.size());
    return g;
  }

  /// Mean squared error in normalised units of one sample and its gradient,
  /// scaled by `weight`, accumulated into grads. Goes through every stage,
  /// including the feature layer and the transforms.
  double sample_loss_and_gradient(const Path& input, const Eigen::VectorXd& target_normalised, double weight,
                                  Gradients& grads) const {
    if (cfg_.model == ModelKind::sig_olr) throw ConfigError("sig_olr is fitted by least squares");
    TransformTape tape;
    const Path y = transform(input, &tape);
    const Eigen::MatrixXd z = features_.apply(features(y));
    std::vector<Eigen::MatrixXd> xs;
    for (Eigen::Index t = 0; t < z.cols(); ++t) xs.emplace_back(z.col(t));
    RnnTape rtape;
    const Eigen::MatrixXd out = rnn_forward_batch(rnn_, xs, &rtape);
    const Eigen::VectorXd diff = out.col(0) - target_normalised;
    const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
    const Eigen::MatrixXd g_out = (2.0 * weight / static_cast<double>(diff.size())) * diff;
    std::vector<Eigen::MatrixXd> g_xs;
    const bool need_path_grad = !embeddings_.empty();
    rnn_backward_batch(rnn_, xs, rtape, g_out, grads.rnn, need_path_grad ? &g_xs : nullptr);
    if (need_path_grad) {
      Eigen::MatrixXd g_z(z.rows(), z.cols());
      for (Eigen::Index t = 0; t < z.cols(); ++t) g_z.col(t) = g_xs[static_cast<std::size_t>(t)].col(0);
      const Eigen::MatrixXd g_raw = (g_z.array().colwise() / features_.scale.array()).matrix();
      std::vector<double> g_path = features_vjp(y, g_raw);
      transform_vjp(tape, std::move(g_path), grads);
    }
    return loss;
  }

  // Serialisation --------------------------------------------------------

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "logsig-model-v1";
    j["config"] = logsig::to_json(cfg_);
    j["input_width"] = input_width_;
    j["output_width"] = output_width_;
    nlohmann::json w;
    w["U"] = matrix_json(rnn_.U);
    w["W"] = matrix_json(rnn_.W);
    w["V"] = matrix_json(rnn_.V);
    w["b"] = matrix_json(rnn_.b);
    w["c"] = matrix_json(rnn_.c);
    w["olr_weights"] = matrix_json(olr_weights_);
    w["olr_bias"] = matrix_json(olr_bias_);
    nlohmann::json emb = nlohmann::json::array();
    for (const auto& e : embeddings_) emb.push_back(matrix_json(e));
    w["embeddings"] = emb;
    j["weights"] = w;
    j["feature_mean"] = std::vector<double>(features_.mean.data(), features_.mean.data() + features_.mean.size());
    j["feature_scale"] =
        std::vector<double>(features_.scale.data(), features_.scale.data() + features_.scale.size());
    j["target_mean"] = std::vector<double>(targets_.mean.data(), targets_.mean.data() + targets_.mean.size());
    j["target_scale"] = std::vector<double>(targets_.scale.data(), targets_.scale.data() + targets_.scale.size());
    return j;
  }

  static Model from_json(const nlohmann::json& j) {
    try {
      if (j.value("format", "") != "logsig-model-v1") throw DataError("not a logsig model checkpoint");
      Model m(model_config_from_json(j.at("config")), j.at("input_width").get<int>(),
              j.at("output_width").get<int>());
      const auto& w = j.at("weights");
      read_matrix(w.at("U"), m.rnn_.U);
      read_matrix(w.at("W"), m.rnn_.W);
      read_matrix(w.at("V"), m.rnn_.V);
      read_vector(w.at("b"), m.rnn_.b);
      read_vector(w.at("c"), m.rnn_.c);
      read_matrix(w.at("olr_weights"), m.olr_weights_);
      read_vector(w.at("olr_bias"), m.olr_bias_);
      const auto& emb = w.at("embeddings");
      if (emb.size() != m.embeddings_.size()) throw ShapeError("checkpoint has the wrong number of embeddings");
      for (std::size_t i = 0; i < emb.size(); ++i) read_matrix(emb[i], m.embeddings_[i]);
      read_std_vector(j.at("feature_mean"), m.features_.mean);
      read_std_vector(j.at("feature_scale"), m.features_.scale);
      read_std_vector(j.at("target_mean"), m.targets_.mean);
      read_std_vector(j.at("target_scale"), m.targets_.scale);
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed model checkpoint: ") + e.what());
    }
  }

 private:
  static Eigen::MatrixXd glorot(Rng& rng, int rows, int cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-a, a);
    }
    return m;
  }

  static Path embed(const Path& x, const Eigen::MatrixXd& L) {
    const auto n = static_cast<Eigen::Index>(x.length());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> in(
        x.values().data(), n, x.width());
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out = in * L.transpose();
    return Path(x.times(), std::vector<double>(out.data(), out.data() + out.size()), static_cast<int>(L.rows()));
  }

  int compute_feature_width() const {
    const int extra = cfg_.start_point ? path_width_ : 0;
    switch (cfg_.model) {
      case ModelKind::logsig_rnn: return static_cast<int>(logsig_dim(path_width_, cfg_.depth)) + extra;
      case ModelKind::sig_rnn: return static_cast<int>(sig_dim(path_width_, cfg_.depth)) + extra;
      case ModelKind::rnn0: return path_width_;
      case ModelKind::sig_olr: return static_cast<int>(sig_dim(path_width_, cfg_.depth));
    }
    return 0;
  }

  CoarsePartition partition_for(const Path& y) const {
    return make_partition(y, static_cast<std::size_t>(cfg_.segments));
  }

  static Eigen::MatrixXd rows_to_columns(const std::vector<double>& rows, std::size_t count, std::size_t dim) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t i = 0; i < dim; ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[k * dim + i];
    }
    return out;
  }

  Eigen::MatrixXd with_start_points(Eigen::MatrixXd f, const Path& y, const CoarsePartition& part) const {
    if (!cfg_.start_point) return f;
    Eigen::MatrixXd out(f.rows() + y.width(), f.cols());
    out.topRows(f.rows()) = f;
    for (Eigen::Index k = 0; k < f.cols(); ++k) {
      const auto r = y.row(part.boundaries[static_cast<std::size_t>(k)]);
      for (int c = 0; c < y.width(); ++c) out(f.rows() + c, k) = r[c];
    }
    return out;
  }

  // Gradient of <g_raw, features(y)> with respect to the samples of y.
  std::vector<double> features_vjp(const Path& y, const Eigen::MatrixXd& g_raw) const {
    const auto w = static_cast<std::size_t>(y.width());
    std::vector<double> grad(y.length() * w, 0.0);
    if (cfg_.model == ModelKind::rnn0) {
      for (std::size_t i = 0; i + 1 < y.length(); ++i) {
        for (std::size_t c = 0; c < w; ++c) {
          const double g = g_raw(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
          grad[(i + 1) * w + c] += g;
          grad[i * w + c] -= g;
        }
      }
      return grad;
    }
    const auto part = partition_for(y);
    const std::size_t dim = cfg_.model == ModelKind::logsig_rnn ? logsig_dim(y.width(), cfg_.depth)
                                                                : sig_dim(y.width(), cfg_.depth);
    std::vector<double> upstream(part.segments() * dim);
    for (std::size_t k = 0; k < part.segments(); ++k) {
      for (std::size_t i = 0; i < dim; ++i) {
        upstream[k * dim + i] = g_raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      }
    }
    grad = cfg_.model == ModelKind::logsig_rnn ? logsig_sequence_vjp(y, part, cfg_.depth, upstream)
                                               : sig_sequence_vjp(y, part, cfg_.depth, upstream);
    if (cfg_.start_point) {
      for (std::size_t k = 0; k < part.segments(); ++k) {
        for (std::size_t c = 0; c < w; ++c) {
          grad[part.boundaries[k] * w + c] +=
              g_raw(static_cast<Eigen::Index>(dim + c), static_cast<Eigen::Index>(k));
        }
      }
    }
    return grad;
  }

  // Walks the transforms backwards; only embeddings carry parameters.
  void transform_vjp(const TransformTape& tape, std::vector<double> grad, Gradients& grads) const {
    std::size_t e = embeddings_.size();
    for (std::size_t s = cfg_.transforms.size(); s-- > 0;) {
      const Path& in = tape.stages[s];
      const auto n = in.length();
      const auto out_w = static_cast<std::size_t>(tape.stages[s + 1].width());
      const auto in_w = static_cast<std::size_t>(in.width());
      switch (cfg_.transforms[s].kind) {
        case TransformSpec::Kind::accumulate:
          for (std::size_t i = n - 1; i-- > 0;) {
            for (std::size_t c = 0; c < out_w; ++c) grad[i * out_w + c] += grad[(i + 1) * out_w + c];
          }
          break;
        case TransformSpec::Kind::time_incorporate: {
          std::vector<double> g(n * in_w);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < in_w; ++c) g[i * in_w + c] = grad[i * out_w + c + 1];
          }
          grad = std::move(g);
          break;
        }
        case TransformSpec::Kind::embed: {
          --e;
          const Eigen::MatrixXd& L = embeddings_[e];
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gy(
              grad.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_w));
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
              in.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_w));
          grads.embeddings[e].noalias() += gy.transpose() * x;
          Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gx = gy * L;
          grad.assign(gx.data(), gx.data() + gx.size());
          break;
        }
      }
    }
  }

  static std::vector<std::span<double>> blocks(RnnParams& r, std::vector<Eigen::MatrixXd>& emb,
                                               Eigen::MatrixXd& olr_w, Eigen::VectorXd& olr_b) {
    std::vector<std::span<double>> out;
    auto add = [&](auto& m) {
      if (m.size() > 0) out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
    };
    add(r.U);
    add(r.W);
    add(r.V);
    add(r.b);
    add(r.c);
    for (auto& e : emb) add(e);
    add(olr_w);
    add(olr_b);
    return out;
  }

  static nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }

  static void read_matrix(const nlohmann::json& j, Eigen::MatrixXd& m) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows != m.rows() || cols != m.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw ShapeError("checkpoint matrix has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", expected " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
    }
  }

  static void read_vector(const nlohmann::json& j, Eigen::VectorXd& v) {
    Eigen::MatrixXd m(v.size(), 1);
    read_matrix(j, m);
    v = m.col(0);
  }

  static void read_std_vector(const nlohmann::json& j, Eigen::VectorXd& v) {
    const auto data = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != v.size()) throw ShapeError("checkpoint scaling has wrong length");
    v = Eigen::Map<const Eigen::VectorXd>(data.data(), v.size());
  }

  ModelConfig cfg_;
  int input_width_ = 0;
  int output_width_ = 0;
  int path_width_ = 0;
  int feature_width_ = 0;
  RnnParams rnn_;
  std::vector<Eigen::MatrixXd> embeddings_;
  Eigen::MatrixXd olr_weights_;
  Eigen::VectorXd olr_bias_;
  Standardizer features_;
  Standardizer targets_;
};

/// Output of the model's forward pass on a raw sample path, in target units.
inline Eigen::VectorXd logsig_rnn_forward(const Model& model, const Path& x) { return model.predict(x); }

inline Eigen::VectorXd sig_olr_forward(const Model& model, const Path& x) {
  if (model.config().model != ModelKind::sig_olr) throw ConfigError("model is not a sig_olr model");
  return model.predict(x);
}

// ---------------------------------------------------------------------------

/// Adam over a fixed list of parameter blocks.
class Adam {
 public:
  Adam(const std::vector<std::span<double>>& params, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& m = m_[b];
      auto& v = v_[b];
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        const double g = grads[b][i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        params[b][i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

struct EpochMetrics {
  int epoch = 0;
  double train_mse = 0.0;
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> history;
  double test_mse = std::numeric_limits<double>::quiet_NaN();  ///< normalised units
  double seconds = 0.0;
};

/// Options for scoring a trained model on a dataset.
struct EvalOptions {
  double drop_ratio = 0.0;  ///< interior points removed from each model input path
  std::uint64_t drop_seed = 0;
  MissingMode missing = MissingMode::remove;
};

/// Mean squared error in normalised target units (divided by the squared
/// training-target scale, averaged over output components).
inline double evaluate_mse(const Model& model, const Dataset& data, const EvalOptions& opts = {}) {
  if (data.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  double total = 0.0;
  const auto& ts = model.target_scaling();
  for (std::size_t i = 0; i < data.size(); ++i) {
    Path input = model.input_path(data.inputs[i]);
    if (opts.drop_ratio > 0.0) {
      input = drop_points(input, opts.drop_ratio, Rng::derive(opts.drop_seed, i).next_u64(), opts.missing);
    }
    const Eigen::VectorXd err = ((model.predict_input(input) - data.targets[i]).array() / ts.scale.array()).matrix();
    total += err.squaredNorm() / static_cast<double>(err.size());
  }
  return total / static_cast<double>(data.size());
}

namespace detail {

inline std::vector<Eigen::MatrixXd> targets_as_columns(const Dataset& d) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(d.size());
  for (const auto& t : d.targets) out.emplace_back(t);
  return out;
}

}  // namespace detail

/// Fits a model: closed-form least squares for sig_olr, minibatch Adam on
/// the MSE otherwise. Deterministic given cfg.seed.
inline TrainResult train(const ModelConfig& cfg, const Dataset& train_data, const Dataset* test_data = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  cfg.validate();
  train_data.validate();
  if (train_data.size() == 0) throw DataError("training split is empty");
  const int in_w = train_data.inputs.front().width();
  const int out_w = static_cast<int>(train_data.targets.front().size());
  TrainResult result{Model(cfg, in_w, out_w), {}, std::numeric_limits<double>::quiet_NaN(), 0.0};
  Model& model = result.model;

  model.target_scaling() = Standardizer::fit(detail::targets_as_columns(train_data));
  std::vector<Eigen::VectorXd> y;
  y.reserve(train_data.size());
  for (const auto& t : train_data.targets) y.push_back(model.target_scaling().apply(t).col(0));

  std::vector<Path> inputs;
  inputs.reserve(train_data.size());
  for (const auto& x : train_data.inputs) inputs.push_back(model.input_path(x));

  // Feature scaling is frozen from the initial parameters.
  std::vector<Eigen::MatrixXd> raw;
  raw.reserve(inputs.size());
  for (const auto& x : inputs) raw.push_back(model.features(model.transform(x)));
  model.feature_scaling() = Standardizer::fit(raw);

  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  if (cfg.model == ModelKind::sig_olr) {
    const auto n = static_cast<Eigen::Index>(inputs.size());
    Eigen::MatrixXd A(n, model.feature_width() + 1);
    Eigen::MatrixXd B(n, out_w);
    for (Eigen::Index i = 0; i < n; ++i) {
      A.row(i).head(model.feature_width()) = model.feature_scaling().apply(raw[i]).col(0).transpose();
      A(i, model.feature_width()) = 1.0;
      B.row(i) = y[i].transpose();
    }
    const Eigen::MatrixXd X = A.completeOrthogonalDecomposition().solve(B);
    model.olr_weights() = X.topRows(model.feature_width()).transpose();
    model.olr_bias() = X.row(model.feature_width()).transpose();
    EpochMetrics m{1, (A * X - B).squaredNorm() / static_cast<double>(n * out_w),
                   test_data ? evaluate_mse(model, *test_data) : std::numeric_limits<double>::quiet_NaN(), elapsed()};
    result.history.push_back(m);
    result.test_mse = m.test_mse;
    result.seconds = elapsed();
    return result;
  }

  const bool fixed_features = !cfg.has_embedding();
  std::vector<Eigen::MatrixXd> z;
  if (fixed_features) {
    z.reserve(raw.size());
    for (const auto& r : raw) z.push_back(model.feature_scaling().apply(r));
  }
  raw.clear();

  // Test features are fixed too unless an embedding is trained.
  std::vector<Eigen::MatrixXd> test_z;
  if (fixed_features && test_data) {
    for (const auto& x : test_data->inputs) test_z.push_back(model.scaled_features(model.input_path(x)));
  }
  auto test_mse = [&]() {
    if (!test_data) return std::numeric_limits<double>::quiet_NaN();
    if (!fixed_features) return evaluate_mse(model, *test_data);
    double total = 0.0;
    const auto& ts = model.target_scaling();
    for (std::size_t i = 0; i < test_z.size(); ++i) {
      const Eigen::VectorXd err = (model.head(test_z[i]) - ts.apply(test_data->targets[i]).col(0));
      total += err.squaredNorm() / static_cast<double>(err.size());
    }
    return total / static_cast<double>(test_z.size());
  };

  auto params = model.parameters();
  Adam adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates with an epoch-specific stream.
    Rng rng = Rng::derive(cfg.seed ^ 0x5eedULL, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const auto batch = static_cast<double>(end - begin);
      auto grads = model.zero_gradients();
      double batch_loss = 0.0;

      bool batched = fixed_features;
      if (batched) {
        for (std::size_t i = begin + 1; i < end; ++i) {
          batched = batched && z[order[i]].cols() == z[order[begin]].cols();
        }
      }
      if (batched) {
        const Eigen::Index steps = z[order[begin]].cols();
        const auto bsz = static_cast<Eigen::Index>(end - begin);
        std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(steps), Eigen::MatrixXd(model.feature_width(), bsz));
        Eigen::MatrixXd target(out_w, bsz);
        for (Eigen::Index b = 0; b < bsz; ++b) {
          const std::size_t s = order[begin + static_cast<std::size_t>(b)];
          for (Eigen::Index t = 0; t < steps; ++t) xs[static_cast<std::size_t>(t)].col(b) = z[s].col(t);
          target.col(b) = y[s];
        }
        RnnTape tape;
        const Eigen::MatrixXd out = rnn_forward_batch(model.rnn(), xs, &tape);
        const Eigen::MatrixXd diff = out - target;
        batch_loss = diff.squaredNorm() / static_cast<double>(out_w);
        const Eigen::MatrixXd g_out = (2.0 / (batch * out_w)) * diff;
        rnn_backward_batch(model.rnn(), xs, tape, g_out, grads.rnn);
      } else {
        for (std::size_t i = begin; i < end; ++i) {
          const std::size_t s = order[i];
          if (fixed_features) {
            std::vector<Eigen::MatrixXd> xs;
            for (Eigen::Index t = 0; t < z[s].cols(); ++t) xs.emplace_back(z[s].col(t));
            RnnTape tape;
            const Eigen::MatrixXd out = rnn_forward_batch(model.rnn(), xs, &tape);
            const Eigen::MatrixXd diff = out.col(0) - y[s];
            batch_loss += diff.squaredNorm() / static_cast<double>(out_w);
            rnn_backward_batch(model.rnn(), xs, tape, (2.0 / (batch * out_w)) * diff, grads.rnn);
          } else {
            batch_loss += model.sample_loss_and_gradient(inputs[s], y[s], 1.0 / batch, grads);
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      }
      epoch_loss += batch_loss;
      adam.step(params, grads.blocks());
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_mse = epoch_loss / static_cast<double>(order.size());
    m.test_mse = test_mse();
    m.seconds = elapsed();
    if (!std::isfinite(m.train_mse)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
    }
    result.history.push_back(m);
  }
  result.test_mse = result.history.empty() ? test_mse() : result.history.back().test_mse;
  result.seconds = elapsed();
  return result;
}

}  // namespace logsig
