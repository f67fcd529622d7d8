#pragma once

// Experiment configuration: flat "key = value" text grouped in [sections].
//
//   [model]      variant, d_h, d_z, hidden_width, solver, steps_per_interval, field_gain
//   [training]   learning_rate, epochs, clip, clip_norm, momentum, seed, track_validation
//   [data]       source (synthetic|csv), power_csv, env_csv, column selection,
//                env_format (wide|long), gap_fill, train_fraction, max_rows
//   [synthetic]  every SyntheticSpec field
//   [output]     directory
//
// Relative paths are resolved against the directory holding the config file.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "exarnn/data.hpp"
#include "exarnn/errors.hpp"
#include "exarnn/io.hpp"
#include "exarnn/models.hpp"
#include "exarnn/odeflow.hpp"
#include "exarnn/training.hpp"

namespace exarnn {

struct DataSource {
  std::string source{"synthetic"};  // synthetic | csv
  std::string power_csv;
  std::string env_csv;
  std::string power_time_column{"timestamp"};
  std::string env_time_column{"timestamp"};
  std::vector<std::string> power_columns;  // empty: all
  std::vector<std::string> env_columns;    // empty: all (wide format)
  std::string env_format{"wide"};          // wide | long
  std::string env_key_column{"city_name"}; // long format only
  bool gap_fill{false};
  double train_fraction{0.8};
  std::size_t max_rows{0};  // keep only the first max_rows power rows; 0 keeps all

  friend bool operator==(const DataSource&, const DataSource&) = default;
};

struct ExperimentConfig {
  Variant variant{Variant::ExArnn};
  std::size_t d_h{16};
  std::size_t d_z{8};
  std::size_t hidden_width{32};
  SolverMethod solver{SolverMethod::Rk4};
  std::size_t steps_per_interval{4};
  double field_gain{1.0};

  TrainConfig training{};
  std::uint64_t seed{1};
  bool track_validation{false};

  DataSource data{};
  SyntheticSpec synthetic{};
  std::string output_dir{"out"};

  std::string base_dir;  // not serialized

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return config_text(a) == config_text(b);
  }

  static std::string config_text(const ExperimentConfig& c);
};

namespace detail {

using IniTable = std::map<std::string, std::map<std::string, std::string>>;

inline IniTable parse_ini(const std::string& text) {
  IniTable table;
  std::string section;
  for (const auto& [lineno, raw] : io::numbered_lines(text)) {
    std::string_view line = io::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      }
      section = std::string(io::trim(line.substr(1, line.size() - 2)));
      table[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key(io::trim(line.substr(0, eq)));
    const std::string value(io::trim(line.substr(eq + 1)));
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
    }
    if (!table[section].emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + section +
                        "." + key);
    }
  }
  return table;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (io::trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(io::trim(s.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Pulls typed values out of an IniTable, collecting every problem.
class FieldReader {
 public:
  explicit FieldReader(IniTable table) : table_(std::move(table)) {}

  template <typename T, typename Parse>
  void read(const std::string& section, const std::string& key, T& out, Parse parse) {
    auto s = table_.find(section);
    if (s == table_.end()) return;
    auto k = s->second.find(key);
    if (k == s->second.end()) return;
    try {
      out = parse(k->second);
    } catch (const std::exception& e) {
      errors_.push_back(section + "." + key + ": " + e.what());
    }
    s->second.erase(k);
  }

  void number(const std::string& sec, const std::string& key, double& out) {
    read(sec, key, out, [](const std::string& v) {
      auto d = io::parse_double(v);
      if (!d) throw std::invalid_argument("not a number: '" + v + "'");
      return *d;
    });
  }

  template <typename Int>
  void integer(const std::string& sec, const std::string& key, Int& out) {
    read(sec, key, out, [](const std::string& v) {
      auto d = io::parse_double(v);
      if (!d || *d < 0 || *d != std::floor(*d)) {
        throw std::invalid_argument("not a non-negative integer: '" + v + "'");
      }
      return static_cast<Int>(*d);
    });
  }

  void boolean(const std::string& sec, const std::string& key, bool& out) {
    read(sec, key, out, [](const std::string& v) {
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw std::invalid_argument("not a boolean: '" + v + "'");
    });
  }

  void text(const std::string& sec, const std::string& key, std::string& out) {
    read(sec, key, out, [](const std::string& v) { return v; });
  }

  void list(const std::string& sec, const std::string& key, std::vector<std::string>& out) {
    read(sec, key, out, [](const std::string& v) { return split_list(v); });
  }

  // Anything left over was not recognized.
  std::vector<std::string> finish() {
    for (const auto& [sec, keys] : table_)
      for (const auto& [key, _] : keys) errors_.push_back(sec + "." + key + ": unknown key");
    return errors_;
  }

  void error(std::string e) { errors_.push_back(std::move(e)); }

 private:
  IniTable table_;
  std::vector<std::string> errors_;
};

}  // namespace detail

inline std::string ExperimentConfig::config_text(const ExperimentConfig& c) {
  using io::format_double;
  std::ostringstream o;
  o << "[model]\n"
    << "variant = " << to_string(c.variant) << '\n'
    << "d_h = " << c.d_h << '\n'
    << "d_z = " << c.d_z << '\n'
    << "hidden_width = " << c.hidden_width << '\n'
    << "solver = " << to_string(c.solver) << '\n'
    << "steps_per_interval = " << c.steps_per_interval << '\n'
    << "field_gain = " << format_double(c.field_gain) << "\n\n";
  o << "[training]\n"
    << "learning_rate = " << format_double(c.training.learning_rate) << '\n'
    << "epochs = " << c.training.epochs << '\n'
    << "clip = " << (c.training.clip ? "true" : "false") << '\n'
    << "clip_norm = " << format_double(c.training.clip_norm) << '\n'
    << "momentum = " << format_double(c.training.momentum) << '\n'
    << "seed = " << c.seed << '\n'
    << "track_validation = " << (c.track_validation ? "true" : "false") << "\n\n";
  const auto& d = c.data;
  o << "[data]\n"
    << "source = " << d.source << '\n'
    << "power_csv = " << d.power_csv << '\n'
    << "env_csv = " << d.env_csv << '\n'
    << "power_time_column = " << d.power_time_column << '\n'
    << "env_time_column = " << d.env_time_column << '\n'
    << "power_columns = " << detail::join(d.power_columns) << '\n'
    << "env_columns = " << detail::join(d.env_columns) << '\n'
    << "env_format = " << d.env_format << '\n'
    << "env_key_column = " << d.env_key_column << '\n'
    << "gap_fill = " << (d.gap_fill ? "true" : "false") << '\n'
    << "train_fraction = " << format_double(d.train_fraction) << '\n'
    << "max_rows = " << d.max_rows << "\n\n";
  const auto& s = c.synthetic;
  o << "[synthetic]\n"
    << "length = " << s.length << '\n'
    << "power_resolution = " << format_double(s.power_resolution) << '\n'
    << "env_ratio = " << s.env_ratio << '\n'
    << "regime = " << to_string(s.regime) << '\n'
    << "regime_period = " << format_double(s.regime_period) << '\n'
    << "daily_period = " << format_double(s.daily_period) << '\n'
    << "constant_level = " << format_double(s.constant_level) << '\n'
    << "a_mid = " << format_double(s.a_mid) << '\n'
    << "a_swing = " << format_double(s.a_swing) << '\n'
    << "b_mid = " << format_double(s.b_mid) << '\n'
    << "b_swing = " << format_double(s.b_swing) << '\n'
    << "level = " << format_double(s.level) << '\n'
    << "noise = " << format_double(s.noise) << '\n'
    << "start_time = " << format_double(s.start_time) << '\n'
    << "seed = " << s.seed << "\n\n";
  o << "[output]\n"
    << "directory = " << c.output_dir << '\n';
  return o.str();
}

inline std::string to_text(const ExperimentConfig& c) { return ExperimentConfig::config_text(c); }

inline void read_synthetic_fields(detail::FieldReader& r, SyntheticSpec& s) {
  r.integer("synthetic", "length", s.length);
  r.number("synthetic", "power_resolution", s.power_resolution);
  r.integer("synthetic", "env_ratio", s.env_ratio);
  r.read("synthetic", "regime", s.regime, [](const std::string& v) { return parse_regime(v); });
  r.number("synthetic", "regime_period", s.regime_period);
  r.number("synthetic", "daily_period", s.daily_period);
  r.number("synthetic", "constant_level", s.constant_level);
  r.number("synthetic", "a_mid", s.a_mid);
  r.number("synthetic", "a_swing", s.a_swing);
  r.number("synthetic", "b_mid", s.b_mid);
  r.number("synthetic", "b_swing", s.b_swing);
  r.number("synthetic", "level", s.level);
  r.number("synthetic", "noise", s.noise);
  r.number("synthetic", "start_time", s.start_time);
  r.integer("synthetic", "seed", s.seed);
}

inline void check_synthetic(const SyntheticSpec& s, std::vector<std::string>& errors) {
  if (s.length < 2) errors.push_back("synthetic.length: must be at least 2");
  if (s.env_ratio < 1) errors.push_back("synthetic.env_ratio: must be a positive integer");
  if (!(s.power_resolution > 0)) errors.push_back("synthetic.power_resolution: must be > 0");
  if (!(s.noise >= 0)) errors.push_back("synthetic.noise: must be >= 0");
  if (!(s.regime_period > 0) || !(s.daily_period > 0)) {
    errors.push_back("synthetic: periods must be > 0");
  }
}

// Parses and validates. Every problem found is listed in the ConfigError.
inline ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = "") {
  detail::FieldReader r(detail::parse_ini(text));
  ExperimentConfig c;
  c.base_dir = base_dir;
  r.read("model", "variant", c.variant, [](const std::string& v) { return parse_variant(v); });
  r.integer("model", "d_h", c.d_h);
  r.integer("model", "d_z", c.d_z);
  r.integer("model", "hidden_width", c.hidden_width);
  r.read("model", "solver", c.solver, [](const std::string& v) { return parse_solver_method(v); });
  r.integer("model", "steps_per_interval", c.steps_per_interval);
  r.number("model", "field_gain", c.field_gain);

  r.number("training", "learning_rate", c.training.learning_rate);
  r.integer("training", "epochs", c.training.epochs);
  r.boolean("training", "clip", c.training.clip);
  r.number("training", "clip_norm", c.training.clip_norm);
  r.number("training", "momentum", c.training.momentum);
  r.integer("training", "seed", c.seed);
  r.boolean("training", "track_validation", c.track_validation);

  auto& d = c.data;
  r.text("data", "source", d.source);
  r.text("data", "power_csv", d.power_csv);
  r.text("data", "env_csv", d.env_csv);
  r.text("data", "power_time_column", d.power_time_column);
  r.text("data", "env_time_column", d.env_time_column);
  r.list("data", "power_columns", d.power_columns);
  r.list("data", "env_columns", d.env_columns);
  r.text("data", "env_format", d.env_format);
  r.text("data", "env_key_column", d.env_key_column);
  r.boolean("data", "gap_fill", d.gap_fill);
  r.number("data", "train_fraction", d.train_fraction);
  r.integer("data", "max_rows", d.max_rows);

  read_synthetic_fields(r, c.synthetic);
  r.text("output", "directory", c.output_dir);

  auto errors = r.finish();
  if (c.d_h < 1) errors.push_back("model.d_h: must be >= 1");
  if (c.d_z < 1) errors.push_back("model.d_z: must be >= 1");
  if (c.hidden_width < 1) errors.push_back("model.hidden_width: must be >= 1");
  if (c.steps_per_interval < 1) errors.push_back("model.steps_per_interval: must be >= 1");
  if (!(c.training.learning_rate > 0)) errors.push_back("training.learning_rate: must be > 0");
  if (c.training.epochs < 1) errors.push_back("training.epochs: must be >= 1");
  if (!(c.training.clip_norm > 0)) errors.push_back("training.clip_norm: must be > 0");
  if (!(c.training.momentum >= 0 && c.training.momentum < 1)) {
    errors.push_back("training.momentum: must lie in [0, 1)");
  }
  if (!(d.train_fraction > 0 && d.train_fraction < 1)) {
    errors.push_back("data.train_fraction: must lie in (0, 1)");
  }
  if (d.source == "csv") {
    auto check_path = [&](const std::string& key, const std::string& p) {
      if (p.empty()) {
        errors.push_back("data." + key + ": required when source = csv");
      } else if (!std::filesystem::exists(std::filesystem::path(base_dir) / p)) {
        errors.push_back("data." + key + ": file not found: " + p);
      }
    };
    check_path("power_csv", d.power_csv);
    check_path("env_csv", d.env_csv);
    if (d.env_format != "wide" && d.env_format != "long") {
      errors.push_back("data.env_format: expected wide or long");
    }
    if (d.env_format == "long" && d.env_columns.empty()) {
      errors.push_back("data.env_columns: required for long-format environment files");
    }
  } else if (d.source != "synthetic") {
    errors.push_back("data.source: expected synthetic or csv");
  }
  check_synthetic(c.synthetic, errors);
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, std::filesystem::path(path).parent_path().string());
}

inline std::string resolve_path(const ExperimentConfig& c, const std::string& p) {
  if (p.empty() || c.base_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(c.base_dir) / p).string();
}

// Synthetic-only spec file for the `synth` command: just a [synthetic] section.
inline SyntheticSpec parse_synthetic_spec(const std::string& text) {
  detail::FieldReader r(detail::parse_ini(text));
  SyntheticSpec s;
  read_synthetic_fields(r, s);
  auto errors = r.finish();
  check_synthetic(s, errors);
  if (!errors.empty()) {
    std::string msg = "invalid synthetic spec:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return s;
}

}  // namespace exarnn
