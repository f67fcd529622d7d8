#pragma once

// Power / environment series at mismatched resolutions.
//
// Environment samples are snapped onto the power grid so that every
// environment timestamp is also a power timestamp. Values stay in original
// units until normalize() is applied; the z-score statistics always come from
// the training prefix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exarnn/errors.hpp"
#include "exarnn/io.hpp"

namespace exarnn {

struct TimeSeries {
  std::vector<std::string> names;               // channel names
  std::vector<double> times;                    // epoch seconds, ascending
  std::vector<std::vector<double>> values;      // values[i].size() == names.size()

  std::size_t size() const { return times.size(); }
  std::size_t dim() const { return names.size(); }
  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;  // channel had zero spread; stddev forced to 1

  bool empty() const { return mean.empty(); }
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

struct AlignedSeries {
  TimeSeries power;
  TimeSeries env;
  ChannelStats power_stats;  // empty until normalized
  ChannelStats env_stats;
  bool normalized{false};
  bool gap_filled{false};

  std::size_t steps() const { return power.size(); }
  friend bool operator==(const AlignedSeries&, const AlignedSeries&) = default;
};

struct CsvSchema {
  std::string time_column{"timestamp"};
  std::vector<std::string> value_columns;  // empty: every column except time
};

struct LoadOptions {
  CsvSchema power_schema;
  CsvSchema env_schema;
  bool gap_fill{false};  // linearly fill missing power rows instead of rejecting
};

namespace detail {

inline bool is_missing(std::string_view s) {
  s = io::trim(s);
  return s.empty() || s == "nan" || s == "NaN" || s == "NA" || s == "null";
}

inline double median_spacing(const std::vector<double>& t) {
  std::vector<double> d;
  d.reserve(t.size());
  for (std::size_t i = 1; i < t.size(); ++i) d.push_back(t[i] - t[i - 1]);
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

}  // namespace detail

// Parses a timestamp column value: epoch seconds if numeric, RFC 3339 otherwise.
inline std::optional<double> parse_timestamp(std::string_view s, bool epoch) {
  return epoch ? io::parse_double(s) : io::parse_rfc3339(s);
}

// Reads one wide CSV (header row, time column plus value columns). Rows with a
// missing value are dropped; the caller decides whether the resulting gap is
// acceptable. Rows are sorted by time; duplicate timestamps are an error.
inline TimeSeries read_series_csv(const std::string& path, const CsvSchema& schema) {
  const auto lines = io::numbered_lines(io::read_file(path));
  if (lines.empty()) throw DataError(path + ": empty file");
  const auto header = io::split_csv_line(lines.front().second);
  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path + ": no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t tcol = column_of(schema.time_column);
  std::vector<std::size_t> vcols;
  TimeSeries ts;
  if (schema.value_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == tcol) continue;
      vcols.push_back(c);
      ts.names.push_back(header[c]);
    }
  } else {
    for (const auto& name : schema.value_columns) {
      vcols.push_back(column_of(name));
      ts.names.push_back(name);
    }
  }
  if (vcols.empty()) throw DataError(path + ": no value columns");

  std::optional<bool> epoch;  // detected from the first data row
  std::vector<std::pair<double, std::vector<double>>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& [lineno, text] = lines[li];
    if (io::trim(text).empty()) continue;
    const auto fields = io::split_csv_line(text);
    auto fail = [&](const std::string& why) {
      return DataError(path + ":" + std::to_string(lineno) + ": " + why);
    };
    if (fields.size() != header.size()) {
      throw fail("expected " + std::to_string(header.size()) + " fields, got " +
                 std::to_string(fields.size()));
    }
    if (!epoch) epoch = io::parse_double(fields[tcol]).has_value();
    auto t = parse_timestamp(fields[tcol], *epoch);
    if (!t) throw fail("unparseable timestamp '" + fields[tcol] + "'");
    std::vector<double> v;
    v.reserve(vcols.size());
    bool missing = false;
    for (std::size_t c : vcols) {
      if (detail::is_missing(fields[c])) {
        missing = true;
        break;
      }
      auto x = io::parse_double(fields[c]);
      if (!x || !std::isfinite(*x)) throw fail("unparseable value '" + fields[c] + "'");
      v.push_back(*x);
    }
    if (!missing) rows.emplace_back(*t, std::move(v));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) {
      throw OrderingError(path + ": duplicate timestamp " + io::format_double(rows[i].first));
    }
  }
  for (auto& [t, v] : rows) {
    ts.times.push_back(t);
    ts.values.push_back(std::move(v));
  }
  return ts;
}

// Long-format table (time, key, value...) pivoted to one channel per
// (key, value column). Keys are ordered lexicographically. Only timestamps at
// which every key has a value are kept; repeated (time, key) rows keep the
// first occurrence.
inline TimeSeries read_long_csv(const std::string& path, const std::string& time_column,
                                const std::string& key_column,
                                const std::vector<std::string>& value_columns) {
  const auto lines = io::numbered_lines(io::read_file(path));
  if (lines.empty()) throw DataError(path + ": empty file");
  const auto header = io::split_csv_line(lines.front().second);
  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path + ": no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t tcol = column_of(time_column), kcol = column_of(key_column);
  std::vector<std::size_t> vcols;
  for (const auto& n : value_columns) vcols.push_back(column_of(n));

  std::optional<bool> epoch;
  std::map<double, std::map<std::string, std::vector<double>>> table;
  std::map<std::string, int> keys;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& [lineno, text] = lines[li];
    if (io::trim(text).empty()) continue;
    const auto fields = io::split_csv_line(text);
    if (fields.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    if (!epoch) epoch = io::parse_double(fields[tcol]).has_value();
    auto t = parse_timestamp(fields[tcol], *epoch);
    if (!t) {
      throw DataError(path + ":" + std::to_string(lineno) + ": unparseable timestamp '" +
                      fields[tcol] + "'");
    }
    std::vector<double> v;
    bool missing = false;
    for (std::size_t c : vcols) {
      if (detail::is_missing(fields[c])) {
        missing = true;
        break;
      }
      auto x = io::parse_double(fields[c]);
      if (!x) {
        throw DataError(path + ":" + std::to_string(lineno) + ": unparseable value '" +
                        fields[c] + "'");
      }
      v.push_back(*x);
    }
    keys[fields[kcol]] = 0;
    if (!missing) table[*t].try_emplace(fields[kcol], std::move(v));
  }
  TimeSeries ts;
  for (const auto& [k, _] : keys)
    for (const auto& vn : value_columns) ts.names.push_back(k + ":" + vn);
  for (const auto& [t, by_key] : table) {
    if (by_key.size() != keys.size()) continue;
    std::vector<double> row;
    for (const auto& [k, v] : by_key) row.insert(row.end(), v.begin(), v.end());
    ts.times.push_back(t);
    ts.values.push_back(std::move(row));
  }
  return ts;
}

// Checks the power grid for gaps and snaps environment samples onto it.
inline AlignedSeries align(TimeSeries power, TimeSeries env, bool gap_fill) {
  if (power.size() < 2) throw InsufficientDataError("power series needs at least 2 rows");
  if (env.size() < 1) throw InsufficientDataError("environment series is empty");
  AlignedSeries out;
  const double step = detail::median_spacing(power.times);
  if (!(step > 0)) throw OrderingError("power timestamps have zero spacing");

  // Gaps: anything wider than one interval (with 1% slack for jitter).
  TimeSeries filled;
  filled.names = power.names;
  for (std::size_t i = 0; i < power.size(); ++i) {
    if (i > 0) {
      const double gap = power.times[i] - power.times[i - 1];
      if (gap > 1.01 * step) {
        if (!gap_fill) {
          throw DataError("power series has a gap of " + io::format_double(gap) +
                          " s before t=" + io::format_double(power.times[i]) +
                          " (interval " + io::format_double(step) + " s); enable gap_fill");
        }
        const auto missing = static_cast<std::size_t>(std::llround(gap / step)) - 1;
        for (std::size_t k = 1; k <= missing; ++k) {
          const double f = static_cast<double>(k) / static_cast<double>(missing + 1);
          std::vector<double> v(power.dim());
          for (std::size_t c = 0; c < v.size(); ++c) {
            v[c] = (1 - f) * power.values[i - 1][c] + f * power.values[i][c];
          }
          filled.times.push_back(power.times[i - 1] + static_cast<double>(k) * step);
          filled.values.push_back(std::move(v));
        }
        out.gap_filled = true;
      }
    }
    filled.times.push_back(power.times[i]);
    filled.values.push_back(power.values[i]);
  }

  TimeSeries snapped;
  snapped.names = env.names;
  for (std::size_t j = 0; j < env.size(); ++j) {
    const double t = env.times[j];
    auto it = std::lower_bound(filled.times.begin(), filled.times.end(), t);
    double best = std::numeric_limits<double>::infinity();
    if (it != filled.times.end()) best = *it;
    if (it != filled.times.begin() && std::abs(*(it - 1) - t) <= std::abs(best - t)) best = *(it - 1);
    if (std::abs(best - t) > 0.5 * step) {
      throw DataError("environment sample at t=" + io::format_double(t) +
                      " is more than half a power interval from the power grid");
    }
    if (!snapped.times.empty() && snapped.times.back() == best) {
      throw OrderingError("two environment samples snap to power time " + io::format_double(best));
    }
    snapped.times.push_back(best);
    snapped.values.push_back(env.values[j]);
  }
  out.power = std::move(filled);
  out.env = std::move(snapped);
  return out;
}

inline AlignedSeries load_csv(const std::string& power_path, const std::string& env_path,
                              const LoadOptions& opts = {}) {
  return align(read_series_csv(power_path, opts.power_schema),
               read_series_csv(env_path, opts.env_schema), opts.gap_fill);
}

inline std::string series_to_csv(const TimeSeries& ts) {
  std::string out = "timestamp";
  for (const auto& n : ts.names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out += io::format_double(ts.times[i]);
    for (double v : ts.values[i]) out += "," + io::format_double(v);
    out += "\n";
  }
  return out;
}

// Writes the two CSVs in the same layout load_csv reads (epoch-second times).
inline void export_csv(const AlignedSeries& s, const std::string& power_path,
                       const std::string& env_path) {
  io::write_file(power_path, series_to_csv(s.power));
  io::write_file(env_path, series_to_csv(s.env));
}

inline std::size_t train_count(std::size_t steps, double train_frac) {
  if (!(train_frac >= 0.0 && train_frac <= 1.0)) {
    throw ContractError("train fraction must lie in [0, 1]");
  }
  return static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(steps) + 1e-9));
}

inline ChannelStats channel_stats(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  ChannelStats st;
  st.mean.assign(dim, 0.0);
  st.stddev.assign(dim, 1.0);
  st.constant.assign(dim, false);
  if (rows.empty()) throw InsufficientDataError("cannot compute statistics of an empty split");
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t c = 0; c < dim; ++c) st.mean[c] += r[c] / n;
  for (std::size_t c = 0; c < dim; ++c) {
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[c] - st.mean[c]) * (r[c] - st.mean[c]);
    const double sd = std::sqrt(ss / n);
    if (sd > 1e-12 * std::max(1.0, std::abs(st.mean[c]))) {
      st.stddev[c] = sd;
    } else {
      st.constant[c] = true;
    }
  }
  return st;
}

inline void apply_zscore(std::vector<std::vector<double>>& rows, const ChannelStats& st) {
  for (auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) r[c] = (r[c] - st.mean[c]) / st.stddev[c];
}

inline std::vector<double> denormalize(std::span<const double> values, const ChannelStats& st) {
  std::vector<double> out(values.size());
  for (std::size_t c = 0; c < values.size(); ++c) out[c] = values[c] * st.stddev[c] + st.mean[c];
  return out;
}

// z-scores every channel with statistics from the first train_frac of the
// power rows (and the environment samples that fall inside that span).
inline AlignedSeries normalize(const AlignedSeries& s, double train_frac) {
  if (s.normalized) throw ContractError("series is already normalized");
  const std::size_t n_train = std::max<std::size_t>(train_count(s.steps(), train_frac), 1);
  const double boundary = n_train < s.steps() ? s.power.times[n_train]
                                              : std::numeric_limits<double>::infinity();
  AlignedSeries out = s;
  std::vector<std::vector<double>> ptrain(s.power.values.begin(),
                                          s.power.values.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::vector<double>> etrain;
  for (std::size_t j = 0; j < s.env.size(); ++j) {
    if (s.env.times[j] < boundary) etrain.push_back(s.env.values[j]);
  }
  if (etrain.empty()) etrain.push_back(s.env.values.front());
  out.power_stats = channel_stats(ptrain, s.power.dim());
  out.env_stats = channel_stats(etrain, s.env.dim());
  apply_zscore(out.power.values, out.power_stats);
  apply_zscore(out.env.values, out.env_stats);
  out.normalized = true;
  return out;
}

inline AlignedSeries denormalize(const AlignedSeries& s) {
  if (!s.normalized) return s;
  AlignedSeries out = s;
  for (auto& r : out.power.values) r = denormalize(r, s.power_stats);
  for (auto& r : out.env.values) r = denormalize(r, s.env_stats);
  out.normalized = false;
  out.power_stats = {};
  out.env_stats = {};
  return out;
}

// Chronological split. Power rows [0, n_train) go to train; environment
// samples are assigned by time relative to the first test power timestamp.
inline std::pair<AlignedSeries, AlignedSeries> split(const AlignedSeries& s, double train_frac) {
  const std::size_t n_train = train_count(s.steps(), train_frac);
  const double boundary = n_train < s.steps() ? s.power.times[n_train]
                                              : std::numeric_limits<double>::infinity();
  AlignedSeries train, test;
  for (AlignedSeries* part : {&train, &test}) {
    part->power.names = s.power.names;
    part->env.names = s.env.names;
    part->power_stats = s.power_stats;
    part->env_stats = s.env_stats;
    part->normalized = s.normalized;
    part->gap_filled = s.gap_filled;
  }
  for (std::size_t i = 0; i < s.steps(); ++i) {
    AlignedSeries& part = i < n_train ? train : test;
    part.power.times.push_back(s.power.times[i]);
    part.power.values.push_back(s.power.values[i]);
  }
  for (std::size_t j = 0; j < s.env.size(); ++j) {
    AlignedSeries& part = s.env.times[j] < boundary ? train : test;
    part.env.times.push_back(s.env.times[j]);
    part.env.values.push_back(s.env.values[j]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic environment-modulated benchmark.

enum class RegimeFamily { Switching, Constant };

inline std::string to_string(RegimeFamily r) {
  return r == RegimeFamily::Switching ? "switching" : "constant";
}

inline RegimeFamily parse_regime(const std::string& s) {
  if (s == "switching") return RegimeFamily::Switching;
  if (s == "constant") return RegimeFamily::Constant;
  throw ConfigError("unknown regime family '" + s + "' (expected switching or constant)");
}

struct SyntheticSpec {
  std::size_t length{2000};
  double power_resolution{900.0};  // seconds (15 min)
  std::size_t env_ratio{4};        // power samples per environment sample (60 min)
  RegimeFamily regime{RegimeFamily::Switching};
  double regime_period{384.0};     // power steps per slow regime cycle
  double daily_period{96.0};       // power steps per fast cycle
  double constant_level{0.0};      // e(t) for the constant family
  // x(t+1) = a(e) x(t) + b(e) + noise, a(e) = a_mid + a_swing * e,
  // b(e) = b_mid + b_swing * e.
  double a_mid{0.5};
  double a_swing{0.45};
  double b_mid{0.0};
  double b_swing{0.5};
  double level{10.0};  // constant offset added to the recorded load
  double noise{0.05};
  double start_time{1577836800.0};  // 2020-01-01T00:00:00Z
  std::uint64_t seed{7};

  double a(double e) const { return a_mid + a_swing * e; }
  double b(double e) const { return b_mid + b_swing * e; }
};

struct SyntheticSeries {
  AlignedSeries series;
  std::vector<double> regime;  // latent e(t_i) at every power step
};

inline double latent_environment(const SyntheticSpec& spec, double step) {
  if (spec.regime == RegimeFamily::Constant) return spec.constant_level;
  const double two_pi = 2.0 * std::numbers::pi;
  // Smooth plateaus near +-1 with a small fast ripple; stays within [-1, 1].
  const double slow = std::tanh(3.0 * std::sin(two_pi * step / spec.regime_period));
  const double fast = std::sin(two_pi * step / spec.daily_period);
  return 0.85 * slow + 0.15 * fast;
}

inline SyntheticSeries synth_regime_series(const SyntheticSpec& spec) {
  if (spec.env_ratio < 1) throw ConfigError("env_ratio must be a positive integer");
  if (spec.length < 2) throw ConfigError("synthetic length must be at least 2");
  SyntheticSeries out;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto& s = out.series;
  s.power.names = {"load"};
  s.env.names = {"temperature"};
  out.regime.resize(spec.length);
  for (std::size_t i = 0; i < spec.length; ++i) {
    out.regime[i] = latent_environment(spec, static_cast<double>(i));
  }
  const double e0 = out.regime[0];
  double x = std::abs(1.0 - spec.a(e0)) > 1e-9 ? spec.b(e0) / (1.0 - spec.a(e0)) : 0.0;
  for (std::size_t i = 0; i < spec.length; ++i) {
    const double t = spec.start_time + static_cast<double>(i) * spec.power_resolution;
    s.power.times.push_back(t);
    s.power.values.push_back({spec.level + x});
    if (i % spec.env_ratio == 0) {
      s.env.times.push_back(t);
      s.env.values.push_back({out.regime[i]});
    }
    const double e = out.regime[i];
    const double eps = spec.noise > 0 ? spec.noise * gauss(rng) : 0.0;
    x = spec.a(e) * x + spec.b(e) + eps;
  }
  return out;
}

}  // namespace exarnn
