#pragma once

// End-to-end experiment: load or synthesize data, train one model, score the
// held-out split and write plot-ready CSVs.
//
// Output directory layout:
//   metrics.csv       one row; deterministic for a fixed seed and config
//   timing.csv        wall-clock training and test-pass seconds
//   predictions.csv   time,channel,actual,predicted,actual_norm,predicted_norm,split
//   loss_history.csv  epoch,train_loss[,val_loss]
//   model.ckpt        checkpoint of the trained model
//   config.ini        the resolved configuration

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "exarnn/checkpoint.hpp"
#include "exarnn/config.hpp"
#include "exarnn/data.hpp"
#include "exarnn/io.hpp"
#include "exarnn/models.hpp"
#include "exarnn/training.hpp"

namespace exarnn {

struct MapeResult {
  double percent{std::numeric_limits<double>::quiet_NaN()};
  std::size_t used{0};
  std::size_t excluded{0};  // entries with |target| < epsilon
};

// 100 * mean(|pred - target| / |target|) over every channel of every step.
inline MapeResult mape(const std::vector<std::vector<double>>& preds,
                       const std::vector<std::vector<double>>& targets, double epsilon = 1e-8) {
  if (preds.size() != targets.size()) throw ContractError("mape: length mismatch");
  MapeResult r;
  double acc = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k].size() != targets[k].size()) throw ContractError("mape: channel mismatch");
    for (std::size_t c = 0; c < preds[k].size(); ++c) {
      const double t = targets[k][c];
      if (std::abs(t) < epsilon) {
        ++r.excluded;
        continue;
      }
      acc += std::abs(preds[k][c] - t) / std::abs(t);
      ++r.used;
    }
  }
  if (r.used > 0) r.percent = 100.0 * acc / static_cast<double>(r.used);
  return r;
}

// Mean over steps of the squared error norm.
inline double mse(const std::vector<std::vector<double>>& preds,
                  const std::vector<std::vector<double>>& targets) {
  if (preds.empty()) throw ContractError("mse: no predictions");
  return squared_error_sum(preds, targets) / static_cast<double>(preds.size());
}

struct PreparedData {
  AlignedSeries raw;         // original units
  AlignedSeries normalized;  // z-scored with train statistics
  AlignedSeries train;
  AlignedSeries test;
  std::vector<double> regime;  // latent environment, synthetic data only
};

inline AlignedSeries truncate_rows(const AlignedSeries& s, std::size_t max_rows) {
  if (max_rows == 0 || max_rows >= s.steps()) return s;
  AlignedSeries out = s;
  out.power.times.resize(max_rows);
  out.power.values.resize(max_rows);
  const double last = out.power.times.back();
  std::size_t keep = 0;
  while (keep < out.env.size() && out.env.times[keep] <= last) ++keep;
  out.env.times.resize(keep);
  out.env.values.resize(keep);
  if (keep == 0) throw InsufficientDataError("no environment samples within the first max_rows rows");
  return out;
}

inline PreparedData prepare_data(const ExperimentConfig& c) {
  PreparedData d;
  if (c.data.source == "synthetic") {
    auto syn = synth_regime_series(c.synthetic);
    d.raw = std::move(syn.series);
    d.regime = std::move(syn.regime);
  } else {
    CsvSchema ps{c.data.power_time_column, c.data.power_columns};
    TimeSeries power = read_series_csv(resolve_path(c, c.data.power_csv), ps);
    TimeSeries env;
    if (c.data.env_format == "long") {
      env = read_long_csv(resolve_path(c, c.data.env_csv), c.data.env_time_column,
                          c.data.env_key_column, c.data.env_columns);
    } else {
      env = read_series_csv(resolve_path(c, c.data.env_csv),
                            CsvSchema{c.data.env_time_column, c.data.env_columns});
    }
    d.raw = align(std::move(power), std::move(env), c.data.gap_fill);
  }
  d.raw = truncate_rows(d.raw, c.data.max_rows);
  d.normalized = normalize(d.raw, c.data.train_fraction);
  std::tie(d.train, d.test) = split(d.normalized, c.data.train_fraction);
  if (d.train.steps() < 2 || d.test.steps() < 2) {
    throw InsufficientDataError("train and test splits each need at least 2 power steps (got " +
                                std::to_string(d.train.steps()) + " and " +
                                std::to_string(d.test.steps()) + ")");
  }
  if (d.train.env.size() == 0) throw InsufficientDataError("no environment samples in the train split");
  return d;
}

// The test split run on its own, as a deployed model would see it. The last
// earlier environment sample is carried in when the split starts without one.
inline AlignedSeries standalone_test_series(const PreparedData& d) {
  AlignedSeries s = d.test;
  if (s.env.size() == 0 || s.env.times.front() > s.power.times.front()) {
    const auto& env = d.normalized.env;
    std::size_t j = 0;
    while (j + 1 < env.size() && env.times[j + 1] <= s.power.times.front()) ++j;
    s.env.times.insert(s.env.times.begin(), env.times[j]);
    s.env.values.insert(s.env.values.begin(), env.values[j]);
  }
  return s;
}

inline ForecastModel make_model(const ExperimentConfig& c, const PreparedData& d, std::uint64_t seed) {
  ModelDims dims;
  dims.d_x = d.raw.power.dim();
  dims.d_w = d.raw.env.dim();
  dims.d_h = c.d_h;
  dims.d_z = c.d_z;
  dims.hidden_width = c.hidden_width;
  ModelOptions opts;
  opts.solver = SolverSpec{c.solver, c.steps_per_interval};
  opts.field_gain = c.field_gain;
  ForecastModel m = ForecastModel::create(c.variant, dims, opts, seed);
  m.set_time_scale(TimeScale::fit(d.train.power.times));
  m.set_stats(d.normalized.power_stats, d.normalized.env_stats);
  return m;
}

struct PredictionRow {
  double time{0};
  std::string channel;
  double actual{0}, predicted{0}, actual_norm{0}, predicted_norm{0};
  bool test{false};
};

struct Metrics {
  Variant variant{Variant::ExArnn};
  std::uint64_t seed{0};
  std::size_t epochs{0};
  double learning_rate{0};
  std::size_t train_steps{0};
  std::size_t test_targets{0};
  double final_train_loss{0};
  double test_mse{0};
  double test_mape{0};
  std::size_t mape_excluded{0};
  double train_seconds{0};
  double test_seconds{0};
};

struct ExperimentResult {
  ExperimentConfig config;
  Metrics metrics;
  TrainResult history;
  std::vector<PredictionRow> predictions;
  ForecastModel model;
};

// Test-split predictions come from one teacher-forced pass over the whole
// series, so the flow state entering the test span is the one built along
// the training span. Only test targets are scored.
inline ExperimentResult run_experiment(const ExperimentConfig& c,
                                       std::optional<std::uint64_t> seed_override = std::nullopt) {
  using clock = std::chrono::steady_clock;
  ExperimentResult r;
  r.config = c;
  const std::uint64_t seed = seed_override.value_or(c.seed);
  r.config.seed = seed;
  const PreparedData d = prepare_data(c);
  r.model = make_model(c, d, seed);

  const std::size_t first_test_target = d.train.steps();  // index into power rows
  auto score_test = [&](const std::vector<std::vector<double>>& preds) {
    std::vector<std::vector<double>> p(preds.begin() + static_cast<std::ptrdiff_t>(first_test_target - 1), preds.end());
    std::vector<std::vector<double>> t(d.normalized.power.values.begin() + static_cast<std::ptrdiff_t>(first_test_target),
                                       d.normalized.power.values.end());
    return mse(p, t);
  };
  Validator validate;
  if (c.track_validation) {
    validate = [&](const ForecastModel& m) { return score_test(m.predict(d.normalized)); };
  }

  const auto t0 = clock::now();
  r.history = train(r.model, d.train, c.training, validate);
  r.metrics.train_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  const auto preds = r.model.predict(d.normalized);
  const auto& ps = d.normalized.power_stats;
  std::vector<std::vector<double>> test_pred_raw, test_target_raw;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const std::size_t i = k + 1;
    const auto pred_raw = denormalize(preds[k], ps);
    const bool is_test = i >= first_test_target;
    for (std::size_t ch = 0; ch < preds[k].size(); ++ch) {
      r.predictions.push_back({d.raw.power.times[i], d.raw.power.names[ch], d.raw.power.values[i][ch],
                               pred_raw[ch], d.normalized.power.values[i][ch], preds[k][ch], is_test});
    }
    if (is_test) {
      test_pred_raw.push_back(pred_raw);
      test_target_raw.push_back(d.raw.power.values[i]);
    }
  }
  const MapeResult mp = mape(test_pred_raw, test_target_raw);

  // Test-pass timing: forward over the test split only, median of five.
  const AlignedSeries standalone = standalone_test_series(d);
  std::vector<double> times;
  for (int rep = 0; rep < 5; ++rep) {
    const auto s0 = clock::now();
    const auto out = r.model.predict(standalone);
    times.push_back(std::chrono::duration<double>(clock::now() - s0).count());
    if (out.empty()) throw ContractError("empty test prediction");
  }
  std::nth_element(times.begin(), times.begin() + 2, times.end());

  auto& m = r.metrics;
  m.variant = c.variant;
  m.seed = seed;
  m.epochs = c.training.epochs;
  m.learning_rate = c.training.learning_rate;
  m.train_steps = d.train.steps();
  m.test_targets = test_pred_raw.size();
  m.final_train_loss = loss_value(r.model, d.train);
  m.test_mse = score_test(preds);
  m.test_mape = mp.percent;
  m.mape_excluded = mp.excluded;
  m.test_seconds = times[2];
  return r;
}

inline std::string metrics_csv(const Metrics& m) {
  using io::format_double;
  std::ostringstream o;
  o << "variant,seed,epochs,learning_rate,train_steps,test_targets,final_train_loss,test_mse,"
       "test_mape,mape_excluded\n";
  o << to_string(m.variant) << ',' << m.seed << ',' << m.epochs << ','
    << format_double(m.learning_rate) << ',' << m.train_steps << ',' << m.test_targets << ','
    << format_double(m.final_train_loss) << ',' << format_double(m.test_mse) << ','
    << format_double(m.test_mape) << ',' << m.mape_excluded << '\n';
  return o.str();
}

inline std::string timing_csv(const Metrics& m) {
  std::ostringstream o;
  o << "variant,train_seconds,test_seconds\n"
    << to_string(m.variant) << ',' << io::format_double(m.train_seconds) << ','
    << io::format_double(m.test_seconds) << '\n';
  return o.str();
}

inline std::string predictions_csv(const std::vector<PredictionRow>& rows) {
  using io::format_double;
  std::ostringstream o;
  o << "time,channel,actual,predicted,actual_norm,predicted_norm,split\n";
  for (const auto& r : rows) {
    o << format_double(r.time) << ',' << r.channel << ',' << format_double(r.actual) << ','
      << format_double(r.predicted) << ',' << format_double(r.actual_norm) << ','
      << format_double(r.predicted_norm) << ',' << (r.test ? "test" : "train") << '\n';
  }
  return o.str();
}

inline std::string loss_history_csv(const TrainResult& h) {
  using io::format_double;
  std::ostringstream o;
  const bool val = !h.val_history.empty();
  o << "epoch,train_loss" << (val ? ",val_loss" : "") << '\n';
  for (std::size_t e = 0; e < h.loss_history.size(); ++e) {
    o << e + 1 << ',' << format_double(h.loss_history[e]);
    if (val) o << ',' << format_double(h.val_history[e]);
    o << '\n';
  }
  return o.str();
}

inline void write_outputs(const ExperimentResult& r, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  const std::filesystem::path p(dir);
  io::write_file((p / "metrics.csv").string(), metrics_csv(r.metrics));
  io::write_file((p / "timing.csv").string(), timing_csv(r.metrics));
  io::write_file((p / "predictions.csv").string(), predictions_csv(r.predictions));
  io::write_file((p / "loss_history.csv").string(), loss_history_csv(r.history));
  io::write_file((p / "config.ini").string(), to_text(r.config));
  save_checkpoint(r.model, (p / "model.ckpt").string());
}

struct ComparisonRow {
  std::string label;
  Metrics metrics;
};

// Runs every config and writes each run's outputs to its own directory.
// Sequential by default so the test-pass timings do not compete for cores.
inline std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
                                          bool parallel = false) {
  auto one = [](const std::pair<std::string, ExperimentConfig>& lc) {
    ExperimentResult r = run_experiment(lc.second);
    write_outputs(r, resolve_path(lc.second, lc.second.output_dir));
    return ComparisonRow{lc.first, r.metrics};
  };
  std::vector<ComparisonRow> rows;
  if (!parallel) {
    for (const auto& lc : configs) rows.push_back(one(lc));
    return rows;
  }
  std::vector<std::future<ComparisonRow>> jobs;
  for (const auto& lc : configs) jobs.push_back(std::async(std::launch::async, one, std::cref(lc)));
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  using io::format_double;
  std::ostringstream o;
  o << "config,model,seed,mape,mse,test_seconds\n";
  for (const auto& r : rows) {
    o << r.label << ',' << to_string(r.metrics.variant) << ',' << r.metrics.seed << ','
      << format_double(r.metrics.test_mape) << ',' << format_double(r.metrics.test_mse) << ','
      << format_double(r.metrics.test_seconds) << '\n';
  }
  return o.str();
}

// Same content as comparison_csv with space-padded columns.
inline std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"model", "MAPE (%)", "MSE", "test time (s)", "config"}};
  for (const auto& r : rows) {
    char mape_s[32], mse_s[32], time_s[32];
    std::snprintf(mape_s, sizeof mape_s, "%.4f", r.metrics.test_mape);
    std::snprintf(mse_s, sizeof mse_s, "%.6f", r.metrics.test_mse);
    std::snprintf(time_s, sizeof time_s, "%.6f", r.metrics.test_seconds);
    cells.push_back({to_string(r.metrics.variant), mape_s, mse_s, time_s, r.label});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream o;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      o << row[i];
      if (i + 1 < row.size()) o << std::string(width[i] - row[i].size() + 2, ' ');
    }
    o << '\n';
  }
  return o.str();
}

}  // namespace exarnn
