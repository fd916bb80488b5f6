// logsig: command-line front end for signatures, log-signatures, path
// transforms, the synthetic SDE data and model training.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "logsig/experiment.hpp"
#include "logsig/lie.hpp"
#include "logsig/nn.hpp"
#include "logsig/path.hpp"
#include "logsig/sde.hpp"
#include "logsig/signature.hpp"

namespace fs = std::filesystem;
using namespace logsig;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

Path load_path(const std::string& file) {
  if (file == "-") return read_path_csv(std::cin);
  std::ifstream is(file);
  if (!is) throw DataError("cannot open " + file);
  try {
    return read_path_csv(is);
  } catch (const DataError& e) {
    throw DataError(file + ": " + e.what());
  }
}

nlohmann::json load_json(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw DataError("cannot open " + file);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(file + ": " + e.what());
  }
}

/// Writes to `file`, or to stdout when it is empty or "-".
template <typename F>
void with_output(const std::string& file, F&& write) {
  if (file.empty() || file == "-") {
    write(std::cout);
    return;
  }
  std::ofstream os(file);
  if (!os) throw DataError("cannot write " + file);
  write(os);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_rows(std::ostream& os, const std::vector<std::string>& header, const std::vector<double>& data,
                std::size_t cols) {
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (std::size_t r = 0; cols && r < data.size() / cols; ++r) {
    for (std::size_t c = 0; c < cols; ++c) os << (c ? "," : "") << num(data[r * cols + c]);
    os << '\n';
  }
}

std::vector<std::string> tensor_words(int width, int depth) {
  std::vector<std::string> out;
  for (int k = 1; k <= depth; ++k) {
    for (std::size_t idx = 0; idx < level_size(width, k); ++idx) {
      Word w(static_cast<std::size_t>(k));
      std::size_t rem = idx;
      for (int p = k; p-- > 0;) {
        w[p] = static_cast<int>(rem % static_cast<std::size_t>(width));
        rem /= static_cast<std::size_t>(width);
      }
      out.push_back("S(" + word_to_string(w, width) + ")");
    }
  }
  return out;
}

Path apply_op(const Path& x, const std::string& op, std::uint64_t seed, MissingMode mode) {
  if (op == "time") return time_incorporate(x);
  if (op == "accumulate") return accumulate(x);
  if (op == "diff") return first_differences(x);
  const auto colon = op.find(':');
  const std::string name = op.substr(0, colon);
  if (colon != std::string::npos) {
    const std::string arg = op.substr(colon + 1);
    try {
      if (name == "downsample") return downsample(x, static_cast<std::size_t>(std::stoul(arg)));
      if (name == "drop") return drop_points(x, std::stod(arg), seed, mode);
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad argument in transform `" + op + "`");
    }
  }
  throw ConfigError("unknown transform `" + op + "` (expected time, accumulate, diff, downsample:K or drop:R)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signatures, log-signatures and Logsig-RNN models for multivariate paths"};
  app.require_subcommand(1);

  int width = 2, depth = 2;
  std::size_t segments = 1;
  std::string input = "-", output;

  auto* basis = app.add_subcommand("basis", "List the Lyndon basis of the truncated free Lie algebra");
  basis->add_option("-d,--width", width, "Path dimension")->capture_default_str()->check(CLI::PositiveNumber);
  basis->add_option("-m,--depth", depth, "Truncation degree")->capture_default_str()->check(CLI::PositiveNumber);

  auto* sig = app.add_subcommand("sig", "Per-segment truncated signatures of a CSV path");
  auto* logsig_cmd = app.add_subcommand("logsig", "Per-segment log-signatures (Lyndon coordinates) of a CSV path");
  for (auto* sub : {sig, logsig_cmd}) {
    sub->add_option("-i,--input", input, "Path CSV (time,x1..xd); - reads stdin")->capture_default_str();
    sub->add_option("-m,--depth", depth, "Truncation degree")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("-n,--segments", segments, "Number of coarse segments")->capture_default_str();
    sub->add_option("-o,--output", output, "Output CSV (default stdout)");
  }

  std::vector<std::string> ops;
  std::uint64_t seed = 0;
  bool zero_fill = false;
  auto* transform = app.add_subcommand("transform", "Apply path transformations to a CSV path");
  transform->add_option("-i,--input", input, "Path CSV; - reads stdin")->capture_default_str();
  transform->add_option("-o,--output", output, "Output CSV (default stdout)");
  transform->add_option("--op", ops, "time | accumulate | diff | downsample:K | drop:R (repeatable, in order)")
      ->required();
  transform->add_option("--seed", seed, "Seed for drop")->capture_default_str();
  transform->add_flag("--zero-fill", zero_fill, "Zero dropped rows instead of removing them");

  std::size_t count = 2000;
  int steps = 5000;
  double horizon = 10.0, split = 0.8;
  std::uint64_t data_seed = 7;
  std::string out_dir = "data";
  auto* gen = app.add_subcommand("gen-sde", "Simulate the benchmark SDE dataset (Milstein, Stratonovich)");
  gen->add_option("--count", count, "Number of samples")->capture_default_str();
  gen->add_option("--steps", steps, "Time steps per driver")->capture_default_str();
  gen->add_option("--T", horizon, "Time horizon")->capture_default_str();
  gen->add_option("--seed", data_seed, "Base seed")->capture_default_str();
  gen->add_option("--split", split, "Training fraction")->capture_default_str();
  gen->add_option("--out", out_dir, "Output directory")->capture_default_str();

  std::string config_file, data_dir, model_file = "model.json", metrics_file;
  int epochs_override = -1;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
  train_cmd->add_option("--config", config_file, "Model config JSON")->required();
  train_cmd->add_option("--data", data_dir, "Dataset directory (manifest.json + CSVs)")->required();
  train_cmd->add_option("--out", model_file, "Checkpoint to write")->capture_default_str();
  train_cmd->add_option("--metrics", metrics_file, "Per-epoch metrics CSV");
  train_cmd->add_option("--epochs", epochs_override, "Override the configured epoch count");

  std::string split_name = "test";
  double drop_ratio = 0.0;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset split (normalised MSE)");
  eval->add_option("--model", model_file, "Checkpoint JSON")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--split", split_name, "train or test")->capture_default_str()->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--drop-ratio", drop_ratio, "Fraction of interior points removed per path")->capture_default_str();
  eval->add_option("--seed", seed, "Seed for dropped points")->capture_default_str();
  eval->add_flag("--zero-fill", zero_fill, "Zero dropped rows instead of removing them");

  std::string out_override;
  auto* experiment = app.add_subcommand("experiment", "Run a scenario over a grid of models");
  experiment->add_option("--config", config_file, "Experiment spec JSON")->required();
  experiment->add_option("--data", data_dir, "Dataset directory (overrides the spec)");
  experiment->add_option("--out", out_override, "Output directory (overrides the spec)");

  std::string results_file;
  std::vector<std::string> metrics_files;
  auto* plot = app.add_subcommand("plot", "Render result and loss-curve SVGs");
  plot->add_option("--results", results_file, "results.csv from experiment")->required();
  plot->add_option("--metrics", metrics_files, "Per-epoch metrics CSVs (repeatable)");
  plot->add_option("--out", out_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*basis) {
      const auto b = cached_basis(width, depth);
      nlohmann::json grades = nlohmann::json::array();
      for (int n = 1; n <= depth; ++n) {
        std::vector<std::string> words;
        for (std::size_t i = b->grade_begin(n); i < b->grade_begin(n) + b->grade_size(n); ++i) {
          words.push_back(word_to_string(b->word(i), width));
        }
        grades.push_back({{"grade", n}, {"count", b->grade_size(n)}, {"words", words}});
      }
      std::cout << nlohmann::json{{"width", width}, {"depth", depth}, {"dim", b->size()}, {"grades", grades}}.dump(2)
                << '\n';
    } else if (*sig || *logsig_cmd) {
      const Path x = load_path(input);
      const auto part = make_partition(x, segments);
      if (*sig) {
        const auto rows = sig_sequence(x, part, depth);
        with_output(output, [&](std::ostream& os) {
          write_rows(os, tensor_words(x.width(), depth), rows, sig_dim(x.width(), depth));
        });
      } else {
        const auto seq = logsig_sequence(x, part, depth);
        std::vector<std::string> header;
        for (const auto& w : cached_basis(x.width(), depth)->words()) header.push_back(word_to_string(w, x.width()));
        with_output(output, [&](std::ostream& os) { write_rows(os, header, seq.features, seq.dim); });
      }
    } else if (*transform) {
      Path x = load_path(input);
      for (const auto& op : ops) x = apply_op(x, op, seed, zero_fill ? MissingMode::zero_fill : MissingMode::remove);
      with_output(output, [&](std::ostream& os) { write_path_csv(os, x); });
    } else if (*gen) {
      const auto data = gen_dataset(count, steps, horizon, data_seed, split);
      write_dataset(out_dir, data,
                    {{"count", count}, {"steps", steps}, {"T", horizon}, {"seed", data_seed}, {"split", split}});
      std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test samples to "
                << out_dir << '\n';
    } else if (*train_cmd) {
      ModelConfig cfg = model_config_from_json(load_json(config_file));
      if (epochs_override >= 0) cfg.epochs = epochs_override;
      const auto data = read_dataset(data_dir);
      const auto res = train(cfg, data.train, data.test.size() ? &data.test : nullptr);
      with_output(model_file, [&](std::ostream& os) { os << res.model.to_json().dump(2) << '\n'; });
      if (!metrics_file.empty()) with_output(metrics_file, [&](std::ostream& os) { write_metrics_csv(os, res.history); });
      std::cout << "test_mse " << num(res.test_mse) << "\nseconds " << format_number(res.seconds) << '\n';
    } else if (*eval) {
      const Model model = Model::from_json(load_json(model_file));
      const auto data = read_dataset(data_dir);
      const Dataset& d = split_name == "train" ? data.train : data.test;
      const double mse =
          evaluate_mse(model, d, {drop_ratio, seed, zero_fill ? MissingMode::zero_fill : MissingMode::remove});
      std::cout << "mse " << num(mse) << '\n';
    } else if (*experiment) {
      ExperimentSpec spec = experiment_spec_from_json(load_json(config_file));
      if (!data_dir.empty()) spec.data_dir = data_dir;
      if (!out_override.empty()) spec.output_dir = out_override;
      if (spec.output_dir.empty()) spec.output_dir = "results";
      const auto result = run_experiment(spec);
      write_experiment_outputs(spec.output_dir, result);
      plot_metrics(result.rows, result.histories, spec.output_dir);
      std::cout << format_table(result.rows);
    } else if (*plot) {
      std::ifstream is(results_file);
      if (!is) throw DataError("cannot open " + results_file);
      const auto rows = read_results_csv(is);
      std::vector<std::pair<std::string, std::vector<EpochMetrics>>> curves;
      for (const auto& f : metrics_files) {
        std::ifstream m(f);
        if (!m) throw DataError("cannot open " + f);
        curves.emplace_back(fs::path(f).stem().string(), read_metrics_csv(m));
      }
      plot_metrics(rows, curves, out_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NotLieError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
