#pragma once

// Scenario runner for the synthetic benchmark (full resolution, downsampled,
// downsampled with missing points) and the plotting of its results.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "logsig/errors.hpp"
#include "logsig/nn.hpp"
#include "logsig/path.hpp"
#include "logsig/sde.hpp"

namespace logsig {

enum class Scenario { high_frequency, downsample, missing };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::high_frequency: return "high_frequency";
    case Scenario::downsample: return "downsample";
    case Scenario::missing: return "missing";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "high_frequency") return Scenario::high_frequency;
  if (s == "downsample") return Scenario::downsample;
  if (s == "missing") return Scenario::missing;
  throw ConfigError("unknown scenario `" + s + "` (expected high_frequency, downsample or missing)");
}

struct ExperimentSpec {
  Scenario scenario = Scenario::downsample;
  int downsample_to = 1000;  ///< steps kept by downsample and missing
  double drop_ratio = 0.05;  ///< fraction of points removed by missing
  std::uint64_t drop_seed = 0;
  int rnn0_max_steps = 5000;  ///< rnn0 rows longer than this are reported as "-"
  std::vector<ModelConfig> models;
  std::filesystem::path data_dir;
  std::filesystem::path output_dir;

  void validate() const {
    if (models.empty()) throw ConfigError("experiment needs at least one model");
    if (scenario != Scenario::high_frequency && downsample_to < 1) {
      throw ConfigError("downsample_to must be >= 1");
    }
    if (scenario == Scenario::missing && !(drop_ratio >= 0.0 && drop_ratio < 1.0)) {
      throw ConfigError("drop_ratio must lie in [0, 1)");
    }
    for (const auto& m : models) m.validate();
  }
};

inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  try {
    s.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    if (s.scenario != Scenario::high_frequency) s.downsample_to = j.at("downsample_to").get<int>();
    if (s.scenario == Scenario::missing) s.drop_ratio = j.at("drop_ratio").get<double>();
    s.drop_seed = j.value("drop_seed", s.drop_seed);
    s.rnn0_max_steps = j.value("rnn0_max_steps", s.rnn0_max_steps);
    for (const auto& m : j.at("models")) s.models.push_back(model_config_from_json(m));
    s.data_dir = j.value("data", std::string());
    s.output_dir = j.value("out", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

struct ResultRow {
  std::string scenario;
  std::string model;
  std::string features;           ///< e.g. "(4,8)"
  std::optional<double> test_mse;  ///< empty when the model was not run
  double seconds = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<std::pair<std::string, std::vector<EpochMetrics>>> histories;
};

/// Paths a scenario feeds to the models.
inline Dataset scenario_inputs(const ExperimentSpec& spec, const Dataset& data, std::uint64_t salt) {
  Dataset out;
  out.targets = data.targets;
  out.inputs.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Path x = data.inputs[i];
    if (spec.scenario != Scenario::high_frequency && x.length() > static_cast<std::size_t>(spec.downsample_to) + 1) {
      x = downsample(x, static_cast<std::size_t>(spec.downsample_to));
    }
    if (spec.scenario == Scenario::missing && spec.drop_ratio > 0.0) {
      x = drop_points(x, spec.drop_ratio, sample_seed(spec.drop_seed ^ salt, i), MissingMode::remove);
    }
    out.inputs.push_back(std::move(x));
  }
  return out;
}

/// Feature shape a model sees on a given input path, as "(steps,width)" or "(width)".
inline std::string feature_shape(const Model& m, const Path& x) {
  const auto f = m.features(m.transform(m.input_path(x)));
  if (m.config().model == ModelKind::sig_olr) return "(" + std::to_string(f.rows()) + ")";
  return "(" + std::to_string(f.cols()) + "," + std::to_string(f.rows()) + ")";
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec, const SdeDataset& data) {
  spec.validate();
  if (data.train.size() == 0 || data.test.size() == 0) throw DataError("dataset needs both train and test samples");
  const Dataset train_set = scenario_inputs(spec, data.train, 0x7261696eULL);
  const Dataset test_set = scenario_inputs(spec, data.test, 0x74657374ULL);
  ExperimentResult result;
  for (const auto& cfg : spec.models) {
    ResultRow row;
    row.scenario = to_string(spec.scenario);
    row.model = to_string(cfg.model);
    const Model probe(cfg, train_set.inputs.front().width(), static_cast<int>(train_set.targets.front().size()));
    row.features = feature_shape(probe, train_set.inputs.front());
    const std::size_t steps = probe.input_path(train_set.inputs.front()).length() - 1;
    if (cfg.model == ModelKind::rnn0 && steps > static_cast<std::size_t>(spec.rnn0_max_steps)) {
      result.rows.push_back(row);
      continue;
    }
    auto trained = train(cfg, train_set, &test_set);
    row.test_mse = trained.test_mse;
    row.seconds = trained.seconds;
    result.rows.push_back(row);
    result.histories.emplace_back(row.scenario + "/" + row.model, std::move(trained.history));
  }
  return result;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  if (!std::filesystem::exists(spec.data_dir / "manifest.json")) {
    throw DataError("dataset not found: " + (spec.data_dir / "manifest.json").string());
  }
  return run_experiment(spec, read_dataset(spec.data_dir));
}

// CSV and table output ------------------------------------------------------

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "scenario,model,features,test_mse,train_seconds\n";
  for (const auto& r : rows) {
    os << r.scenario << ',' << r.model << ",\"" << r.features << "\","
       << (r.test_mse ? format_number(*r.test_mse) : "-") << ',' << format_number(r.seconds) << '\n';
  }
}

inline std::vector<ResultRow> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("scenario,model,features,test_mse", 0) != 0) {
    throw DataError("results CSV is missing its header");
  }
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') {
        quoted = !quoted;
      } else if (ch == ',' && !quoted) {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell += ch;
      }
    }
    cells.push_back(cell);
    if (cells.size() != 5) throw DataError("results CSV line " + std::to_string(lineno) + " has the wrong column count");
    ResultRow r{cells[0], cells[1], cells[2], std::nullopt, 0.0};
    try {
      if (cells[3] != "-") r.test_mse = std::stod(cells[3]);
      r.seconds = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw DataError("results CSV line " + std::to_string(lineno) + " has a malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& history) {
  os << "epoch,train_mse,test_mse,seconds\n";
  for (const auto& m : history) {
    os << m.epoch << ',' << format_number(m.train_mse) << ','
       << (std::isfinite(m.test_mse) ? format_number(m.test_mse) : "") << ',' << format_number(m.seconds) << '\n';
  }
}

inline std::vector<EpochMetrics> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("epoch,train_mse", 0) != 0) throw DataError("metrics CSV is missing its header");
  std::vector<EpochMetrics> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c, d;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    std::getline(ss, d, ',');
    try {
      EpochMetrics m;
      m.epoch = std::stoi(a);
      m.train_mse = std::stod(b);
      m.test_mse = c.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(c);
      m.seconds = d.empty() ? 0.0 : std::stod(d);
      out.push_back(m);
    } catch (const std::exception&) {
      throw DataError("malformed metrics CSV line: " + line);
    }
  }
  return out;
}

inline std::string format_table(const std::vector<ResultRow>& rows) {
  std::vector<std::array<std::string, 5>> cells{{"scenario", "model", "features", "test_mse", "seconds"}};
  for (const auto& r : rows) {
    cells.push_back({r.scenario, r.model, r.features, r.test_mse ? format_number(*r.test_mse) : "-",
                     format_number(r.seconds)});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < 5; ++c) {
      if (c + 1 < 5) {
        os << std::left << std::setw(static_cast<int>(width[c])) << cells[i][c] << "  ";
      } else {
        os << cells[i][c] << '\n';
      }
    }
    if (i == 0) {
      for (std::size_t c = 0; c < 5; ++c) os << std::string(width[c], '-') << (c + 1 < 5 ? "  " : "\n");
    }
  }
  return os.str();
}

/// Writes results.csv, results.txt and one metrics CSV per trained model.
inline void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  std::ofstream csv(dir / "results.csv");
  if (!csv) throw DataError("cannot write " + (dir / "results.csv").string());
  write_results_csv(csv, result.rows);
  std::ofstream txt(dir / "results.txt");
  txt << format_table(result.rows);
  for (std::size_t i = 0; i < result.histories.size(); ++i) {
    std::string name = result.histories[i].first;
    std::replace(name.begin(), name.end(), '/', '_');
    std::ofstream m(dir / ("metrics_" + std::to_string(i) + "_" + name + ".csv"));
    write_metrics_csv(m, result.histories[i].second);
  }
}

// Plots -----------------------------------------------------------------

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// Bar chart of log10(test MSE) per result row.
inline std::string bar_chart_svg(const std::vector<ResultRow>& rows) {
  const double bar = 48.0, gap = 16.0, left = 60.0, top = 30.0, height = 240.0;
  const double width = left + std::max<std::size_t>(rows.size(), 1) * (bar + gap) + gap;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& r : rows) {
    if (!r.test_mse || !(*r.test_mse > 0.0)) continue;
    const double v = std::log10(*r.test_mse);
    lo = any ? std::min(lo, v) : v;
    hi = any ? std::max(hi, v) : v;
    any = true;
  }
  lo = std::floor(lo) - 1.0;
  hi = std::max(std::ceil(hi), lo + 1.0);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fixed(width) << "\" height=\""
     << detail::fixed(top + height + 90) << "\">\n";
  os << "<text x=\"" << detail::fixed(left) << "\" y=\"18\" font-size=\"13\">log10 test MSE</text>\n";
  os << "<line x1=\"" << detail::fixed(left) << "\" y1=\"" << detail::fixed(top + height) << "\" x2=\""
     << detail::fixed(width) << "\" y2=\"" << detail::fixed(top + height) << "\" stroke=\"black\"/>\n";
  for (int tick = static_cast<int>(lo); tick <= static_cast<int>(hi); ++tick) {
    const double y = top + height * (hi - tick) / (hi - lo);
    os << "<text x=\"8\" y=\"" << detail::fixed(y + 4) << "\" font-size=\"11\">" << tick << "</text>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = left + gap + static_cast<double>(i) * (bar + gap);
    const auto& r = rows[i];
    if (r.test_mse && *r.test_mse > 0.0) {
      const double v = std::log10(*r.test_mse);
      const double h = height * (v - lo) / (hi - lo);
      os << "<rect x=\"" << detail::fixed(x) << "\" y=\"" << detail::fixed(top + height - h) << "\" width=\""
         << detail::fixed(bar) << "\" height=\"" << detail::fixed(h) << "\" fill=\"#4878a8\"/>\n";
    }
    os << "<text x=\"" << detail::fixed(x) << "\" y=\"" << detail::fixed(top + height + 16)
       << "\" font-size=\"10\">" << detail::svg_escape(r.model) << "</text>\n";
    os << "<text x=\"" << detail::fixed(x) << "\" y=\"" << detail::fixed(top + height + 30)
       << "\" font-size=\"10\">" << detail::svg_escape(r.scenario) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Training-loss curves (log10 train MSE against epoch).
inline std::string loss_curves_svg(const std::vector<std::pair<std::string, std::vector<EpochMetrics>>>& curves) {
  static const char* colors[] = {"#4878a8", "#d0603c", "#4a9a5a", "#8a5aa8", "#a08030", "#505050"};
  const double left = 60.0, top = 30.0, w = 480.0, h = 240.0;
  int max_epoch = 1;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& [name, hist] : curves) {
    for (const auto& m : hist) {
      max_epoch = std::max(max_epoch, m.epoch);
      if (!(m.train_mse > 0.0)) continue;
      const double v = std::log10(m.train_mse);
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  }
  lo = std::floor(lo);
  hi = std::max(std::ceil(hi), lo + 1.0);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fixed(left + w + 180) << "\" height=\""
     << detail::fixed(top + h + 40) << "\">\n";
  os << "<text x=\"" << detail::fixed(left) << "\" y=\"18\" font-size=\"13\">log10 train MSE by epoch</text>\n";
  os << "<rect x=\"" << detail::fixed(left) << "\" y=\"" << detail::fixed(top) << "\" width=\"" << detail::fixed(w)
     << "\" height=\"" << detail::fixed(h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int tick = static_cast<int>(lo); tick <= static_cast<int>(hi); ++tick) {
    const double y = top + h * (hi - tick) / (hi - lo);
    os << "<text x=\"8\" y=\"" << detail::fixed(y + 4) << "\" font-size=\"11\">" << tick << "</text>\n";
  }
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& [name, hist] = curves[c];
    const char* color = colors[c % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    bool first = true;
    for (const auto& m : hist) {
      if (!(m.train_mse > 0.0)) continue;
      const double x = left + w * m.epoch / max_epoch;
      const double y = top + h * (hi - std::log10(m.train_mse)) / (hi - lo);
      os << (first ? "" : " ") << detail::fixed(x) << ',' << detail::fixed(y);
      first = false;
    }
    os << "\"/>\n";
    os << "<text x=\"" << detail::fixed(left + w + 10) << "\" y=\"" << detail::fixed(top + 14 + 16.0 * c)
       << "\" font-size=\"11\" fill=\"" << color << "\">" << detail::svg_escape(name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Writes results.csv and test_mse.svg, plus loss_curves.svg when curves are given.
inline void plot_metrics(const std::vector<ResultRow>& rows,
                         const std::vector<std::pair<std::string, std::vector<EpochMetrics>>>& curves,
                         const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  {
    std::ofstream csv(dir / "results.csv");
    if (!csv) throw DataError("cannot write " + (dir / "results.csv").string());
    write_results_csv(csv, rows);
  }
  if (!rows.empty()) {
    std::ofstream svg(dir / "test_mse.svg");
    svg << bar_chart_svg(rows);
  }
  if (!curves.empty()) {
    std::ofstream svg(dir / "loss_curves.svg");
    svg << loss_curves_svg(curves);
  }
}

}  // namespace logsig
