#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "exarnn/data.hpp"

using namespace exarnn;
using Catch::Approx;

namespace {

const std::string kData = EXARNN_TEST_DATA_DIR;

std::string data(const std::string& name) { return kData + "/" + name; }

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("exarnn_test_" + name);
  std::filesystem::create_directories(p);
  return p;
}

std::string write_temp(const std::string& name, const std::string& content) {
  const auto p = scratch_dir("data") / name;
  std::ofstream(p) << content;
  return p.string();
}

// Independent row counter: data rows whose selected field is non-empty.
std::size_t count_rows(const std::string& path, std::size_t field, const std::string& key = "",
                       std::size_t key_field = 0) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::size_t n = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> parts;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      else if (ch == ',' && !quoted) {
        parts.push_back(cur);
        cur.clear();
      } else cur += ch;
    }
    parts.push_back(cur);
    if (!key.empty() && parts[key_field] != key) continue;
    if (!parts[field].empty()) ++n;
  }
  return n;
}

AlignedSeries ramp_series(std::size_t n, std::size_t ratio) {
  AlignedSeries s;
  s.power.names = {"load", "aux"};
  s.env.names = {"temp"};
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 60.0 * static_cast<double>(i);
    s.power.times.push_back(t);
    s.power.values.push_back({10.0 + std::sin(static_cast<double>(i)), 3.0 * static_cast<double>(i)});
    if (i % ratio == 0) {
      s.env.times.push_back(t);
      s.env.values.push_back({std::cos(static_cast<double>(i))});
    }
  }
  return s;
}

}  // namespace

TEST_CASE("rfc 3339 and epoch timestamps", "[data]") {
  CHECK(*io::parse_rfc3339("1970-01-01T00:00:00Z") == 0.0);
  CHECK(*io::parse_rfc3339("2015-01-01 00:00:00+01:00") == 1420066800.0);
  CHECK(*io::parse_rfc3339("2020-02-29T12:30:15.5Z") == 1582979415.5);
  CHECK(*io::parse_rfc3339("2021-03-01T00:15:00-0130") == 1614557700.0 + 5400.0);
  CHECK_FALSE(io::parse_rfc3339("yesterday").has_value());
  CHECK_FALSE(io::parse_rfc3339("2021-13-01T00:00:00Z").has_value());
}

TEST_CASE("csv line splitting honours quotes", "[data]") {
  const auto f = io::split_csv_line(R"(a,"b, c",,"d ""e""")");
  REQUIRE(f.size() == 4);
  CHECK(f[1] == "b, c");
  CHECK(f[2].empty());
  CHECK(f[3] == "d \"e\"");
}

TEST_CASE("eight power rows and two environment rows", "[data]") {
  const auto s = load_csv(data("power_8.csv"), data("env_2.csv"));
  CHECK(s.steps() == 8);
  CHECK(s.env.size() == 2);
  CHECK(s.power.names == std::vector<std::string>{"load"});
  CHECK(s.env.names == std::vector<std::string>{"temperature", "humidity"});
  CHECK_FALSE(s.normalized);
  // Environment samples 20 s and 10 s off the grid snap onto power times.
  CHECK(s.env.times[0] == s.power.times[0]);
  CHECK(s.env.times[1] == s.power.times[4]);
  CHECK(s.env.values[1] == std::vector<double>{5.0, 78.0});
  CHECK(s.power.values[7][0] == 110.5);
}

TEST_CASE("samples already on the grid snap to themselves", "[data][property]") {
  const auto s = ramp_series(20, 4);
  const auto a = align(s.power, s.env, false);
  CHECK(a.env.times == s.env.times);
  CHECK(a.power == s.power);
}

TEST_CASE("Spain-format fixture", "[data]") {
  const std::string energy = data("spain_energy.csv"), weather = data("spain_weather.csv");
  const auto power = read_series_csv(energy, CsvSchema{"time", {"total load actual"}});
  CHECK(power.size() == count_rows(energy, 4));
  CHECK(power.times.front() == 1420066800.0);
  const auto env = read_long_csv(weather, "dt_iso", "city_name", {"temp", "humidity"});
  CHECK(env.names == std::vector<std::string>{"Bilbao:temp", "Bilbao:humidity", "Madrid:temp",
                                              "Madrid:humidity", "Valencia:temp", "Valencia:humidity"});
  // Timestamps where every city reported.
  CHECK(env.size() == count_rows(weather, 2, "Bilbao", 1));
  CHECK(env.values[0][4] == Approx(270.5));

  // One load value is missing, which leaves an hour-wide gap.
  CHECK_THROWS_AS(align(power, env, false), DataError);
  const auto filled = align(power, env, true);
  CHECK(filled.gap_filled);
  CHECK(filled.steps() == 12);
  CHECK(filled.power.values[5][0] == Approx(0.5 * (filled.power.values[4][0] + filled.power.values[6][0])));
}

TEST_CASE("normalize then denormalize recovers the data", "[data][property]") {
  const auto s = ramp_series(50, 4);
  const auto n = normalize(s, 0.8);
  CHECK(n.normalized);
  // Train-prefix statistics: mean 0 and unit variance over the first 40 rows.
  double m = 0;
  for (std::size_t i = 0; i < 40; ++i) m += n.power.values[i][1];
  CHECK(std::abs(m / 40) < 1e-12);
  const auto back = denormalize(n);
  for (std::size_t i = 0; i < s.steps(); ++i)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(back.power.values[i][c] - s.power.values[i][c]) <= 1e-12);
  for (std::size_t j = 0; j < s.env.size(); ++j) CHECK(std::abs(back.env.values[j][0] - s.env.values[j][0]) <= 1e-12);
  CHECK_THROWS_AS(normalize(n, 0.8), ContractError);
}

TEST_CASE("constant channels keep unit scale", "[data]") {
  auto s = ramp_series(10, 2);
  for (auto& r : s.env.values) r[0] = 4.0;
  const auto n = normalize(s, 0.8);
  CHECK(n.env_stats.constant[0]);
  CHECK(n.env_stats.stddev[0] == 1.0);
  for (const auto& r : n.env.values) CHECK(r[0] == 0.0);
}

TEST_CASE("chronological 80/20 split", "[data]") {
  const auto s = ramp_series(10, 4);  // env at steps 0, 4, 8
  const auto [train, test] = split(s, 0.8);
  CHECK(train.steps() == 8);
  CHECK(test.steps() == 2);
  CHECK(train.power.times.back() < test.power.times.front());
  CHECK(train.env.size() == 2);
  CHECK(test.env.size() == 1);
  CHECK(test.env.times[0] == s.power.times[8]);

  // A sample exactly at the first test time belongs to the test split.
  const auto [a, b] = split(ramp_series(12, 3), 0.75);  // env at 0,3,6,9
  CHECK(a.steps() == 9);
  CHECK(b.env.size() == 1);
  CHECK(b.env.times[0] == b.power.times[0]);
}

TEST_CASE("synthetic benchmark shape", "[data][synthetic]") {
  SyntheticSpec spec;
  spec.length = 2000;
  const auto syn = synth_regime_series(spec);
  CHECK(syn.series.steps() == 2000);
  CHECK(syn.series.env.size() == 500);
  CHECK(syn.regime.size() == 2000);
  spec.length = 1001;
  CHECK(synth_regime_series(spec).series.env.size() == 251);  // ceil(1001 / 4)
  for (double e : syn.regime) CHECK(std::abs(e) <= 1.0);
}

TEST_CASE("synthetic generator is reproducible byte for byte", "[data][synthetic][property]") {
  SyntheticSpec spec;
  spec.length = 300;
  const auto dir = scratch_dir("synth");
  const auto a = synth_regime_series(spec), b = synth_regime_series(spec);
  export_csv(a.series, (dir / "p1.csv").string(), (dir / "e1.csv").string());
  export_csv(b.series, (dir / "p2.csv").string(), (dir / "e2.csv").string());
  CHECK(io::read_file((dir / "p1.csv").string()) == io::read_file((dir / "p2.csv").string()));
  CHECK(io::read_file((dir / "e1.csv").string()) == io::read_file((dir / "e2.csv").string()));
  spec.seed += 1;
  CHECK(synth_regime_series(spec).series.power != a.series.power);
}

TEST_CASE("noise-free synthetic data follows the regime recursion exactly", "[data][synthetic]") {
  SyntheticSpec spec;
  spec.length = 400;
  spec.noise = 0.0;
  const auto syn = synth_regime_series(spec);
  const auto& x = syn.series.power.values;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double e = syn.regime[i];
    const double next = spec.a(e) * (x[i][0] - spec.level) + spec.b(e) + spec.level;
    REQUIRE(x[i + 1][0] == Approx(next).margin(1e-12));
  }
  // The environment channel carries the latent regime at its sample times.
  for (std::size_t j = 0; j < syn.series.env.size(); ++j) CHECK(syn.series.env.values[j][0] == syn.regime[4 * j]);
}

TEST_CASE("constant regime family", "[data][synthetic]") {
  SyntheticSpec spec;
  spec.regime = RegimeFamily::Constant;
  spec.constant_level = 0.3;
  spec.length = 50;
  for (double e : synth_regime_series(spec).regime) CHECK(e == 0.3);
  CHECK(parse_regime("constant") == RegimeFamily::Constant);
  CHECK_THROWS_AS(parse_regime("weekly"), ConfigError);
}

TEST_CASE("exported csv reloads to the same series", "[data][property]") {
  SyntheticSpec spec;
  spec.length = 120;
  const auto syn = synth_regime_series(spec);
  const auto dir = scratch_dir("roundtrip");
  const auto p = (dir / "power.csv").string(), e = (dir / "env.csv").string();
  export_csv(syn.series, p, e);
  const auto back = load_csv(p, e);
  CHECK(back.power == syn.series.power);
  CHECK(back.env == syn.series.env);
  // Ingesting twice gives the same thing.
  export_csv(back, p, e);
  CHECK(load_csv(p, e) == back);
}

TEST_CASE("gaps and snapping failures", "[data]") {
  const auto power = write_temp("gap_power.csv", "timestamp,load\n0,1\n900,2\n1800,3\n3600,5\n4500,6\n");
  const auto env = write_temp("gap_env.csv", "timestamp,t\n0,1\n3600,2\n");
  CHECK_THROWS_AS(load_csv(power, env), DataError);
  LoadOptions fill;
  fill.gap_fill = true;
  const auto s = load_csv(power, env, fill);
  CHECK(s.steps() == 6);
  CHECK(s.power.values[3][0] == Approx(4.0));

  const auto far = write_temp("far_env.csv", "timestamp,t\n0,1\n6000,2\n");
  CHECK_THROWS_AS(load_csv(power, far, fill), DataError);
  const auto twice = write_temp("twice_env.csv", "timestamp,t\n0,1\n100,2\n");
  CHECK_THROWS_AS(load_csv(power, twice, fill), OrderingError);
}

TEST_CASE("parse errors carry the line number", "[data]") {
  const auto bad_value = write_temp("bad_value.csv", "timestamp,load\n0,1\n900,abc\n");
  try {
    read_series_csv(bad_value, {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring(":3:"));
  }
  const auto bad_time = write_temp("bad_time.csv", "timestamp,load\n2021-01-01T00:00:00Z,1\nnot-a-time,2\n");
  CHECK_THROWS_WITH(read_series_csv(bad_time, {}), Catch::Matchers::ContainsSubstring(":3:"));
  const auto ragged = write_temp("ragged.csv", "timestamp,load\n0,1,2\n");
  CHECK_THROWS_WITH(read_series_csv(ragged, {}), Catch::Matchers::ContainsSubstring(":2:"));
  const auto dup = write_temp("dup.csv", "timestamp,load\n0,1\n0,2\n");
  CHECK_THROWS_AS(read_series_csv(dup, {}), OrderingError);
  CHECK_THROWS_AS(read_series_csv(data("power_8.csv"), CsvSchema{"time", {}}), DataError);
  CHECK_THROWS_AS(read_series_csv(kData + "/missing.csv", {}), DataError);
}

TEST_CASE("too little data", "[data]") {
  const auto one = write_temp("one.csv", "timestamp,load\n0,1\n");
  const auto env = write_temp("one_env.csv", "timestamp,t\n0,1\n");
  CHECK_THROWS_AS(load_csv(one, env), InsufficientDataError);
}
