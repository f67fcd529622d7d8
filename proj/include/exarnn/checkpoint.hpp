#pragma once

// Versioned text checkpoint. Doubles are written in shortest round-trip form,
// so write -> read reproduces every parameter bit for bit.
//
//   exarnn-checkpoint 1
//   variant exarnn
//   dims <d_x> <d_w> <d_h> <d_z> <hidden_width>
//   solver <euler|rk4> <steps_per_interval>
//   field_gain <g>
//   time_scale <span> <interval>
//   power_stats <n> <mean...> <stddev...> <constant flags...>
//   env_stats <n> ...
//   param <name> <group> <rows> <cols> <values...>
//   end

#include <sstream>
#include <string>
#include <vector>

#include "exarnn/errors.hpp"
#include "exarnn/io.hpp"
#include "exarnn/models.hpp"

namespace exarnn {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void write_stats(std::ostringstream& out, const char* key, const ChannelStats& st) {
  out << key << ' ' << st.mean.size();
  for (double v : st.mean) out << ' ' << io::format_double(v);
  for (double v : st.stddev) out << ' ' << io::format_double(v);
  for (bool c : st.constant) out << ' ' << (c ? 1 : 0);
  out << '\n';
}

class TokenReader {
 public:
  TokenReader(std::string line, std::size_t lineno) : in_(std::move(line)), lineno_(lineno) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of line");
    return w;
  }
  double number() {
    const std::string w = word();
    auto v = io::parse_double(w);
    if (!v) fail("bad number '" + w + "'");
    return *v;
  }
  std::size_t count() {
    const double v = number();
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) fail("bad count");
    return static_cast<std::size_t>(v);
  }
  [[noreturn]] void fail(const std::string& why) const {
    throw DataError("checkpoint line " + std::to_string(lineno_) + ": " + why);
  }

 private:
  std::istringstream in_;
  std::size_t lineno_;
};

inline ChannelStats read_stats(TokenReader& r) {
  ChannelStats st;
  const std::size_t n = r.count();
  for (std::size_t i = 0; i < n; ++i) st.mean.push_back(r.number());
  for (std::size_t i = 0; i < n; ++i) st.stddev.push_back(r.number());
  for (std::size_t i = 0; i < n; ++i) st.constant.push_back(r.number() != 0.0);
  return st;
}

}  // namespace detail

inline std::string checkpoint_to_string(const ForecastModel& m) {
  std::ostringstream out;
  const auto& d = m.dims();
  out << "exarnn-checkpoint " << kCheckpointVersion << '\n';
  out << "variant " << to_string(m.variant()) << '\n';
  out << "dims " << d.d_x << ' ' << d.d_w << ' ' << d.d_h << ' ' << d.d_z << ' '
      << d.hidden_width << '\n';
  out << "solver " << to_string(m.options().solver.method) << ' '
      << m.options().solver.steps_per_interval << '\n';
  out << "field_gain " << io::format_double(m.options().field_gain) << '\n';
  out << "time_scale " << io::format_double(m.time_scale().span) << ' '
      << io::format_double(m.time_scale().interval) << '\n';
  detail::write_stats(out, "power_stats", m.power_stats());
  detail::write_stats(out, "env_stats", m.env_stats());
  for (const auto& p : m.params().all()) {
    out << "param " << p.name << ' ' << to_string(p.group) << ' ' << p.value.rows() << ' '
        << p.value.cols();
    for (double v : p.value.flat()) out << ' ' << io::format_double(v);
    out << '\n';
  }
  out << "end\n";
  return out.str();
}

inline ForecastModel checkpoint_from_string(const std::string& text) {
  const auto lines = io::numbered_lines(text);
  std::size_t li = 0;
  auto next = [&]() -> detail::TokenReader {
    while (li < lines.size() && io::trim(lines[li].second).empty()) ++li;
    if (li >= lines.size()) throw DataError("checkpoint: truncated file");
    const auto& [no, line] = lines[li++];
    return detail::TokenReader(line, no);
  };
  auto expect = [](detail::TokenReader& r, const char* key) {
    if (r.word() != key) r.fail(std::string("expected '") + key + "'");
  };

  auto r = next();
  expect(r, "exarnn-checkpoint");
  if (r.count() != kCheckpointVersion) r.fail("unsupported checkpoint version");

  r = next();
  expect(r, "variant");
  const Variant variant = parse_variant(r.word());

  r = next();
  expect(r, "dims");
  ModelDims dims;
  dims.d_x = r.count();
  dims.d_w = r.count();
  dims.d_h = r.count();
  dims.d_z = r.count();
  dims.hidden_width = r.count();

  r = next();
  expect(r, "solver");
  ModelOptions opts;
  opts.solver.method = parse_solver_method(r.word());
  opts.solver.steps_per_interval = r.count();

  r = next();
  expect(r, "field_gain");
  opts.field_gain = r.number();

  // Parameter shapes and order come from a fresh model of the same layout.
  ForecastModel m = ForecastModel::create(variant, dims, opts, 0);

  r = next();
  expect(r, "time_scale");
  TimeScale ts;
  ts.span = r.number();
  ts.interval = r.number();
  m.set_time_scale(ts);

  r = next();
  expect(r, "power_stats");
  ChannelStats power = detail::read_stats(r);
  r = next();
  expect(r, "env_stats");
  ChannelStats env = detail::read_stats(r);
  m.set_stats(std::move(power), std::move(env));

  for (auto& p : m.params().all()) {
    r = next();
    expect(r, "param");
    if (r.word() != p.name) r.fail("expected parameter '" + p.name + "'");
    if (parse_param_group(r.word()) != p.group) r.fail("group mismatch for '" + p.name + "'");
    const std::size_t rows = r.count(), cols = r.count();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      r.fail("shape mismatch for '" + p.name + "'");
    }
    for (double& v : p.value.flat()) v = r.number();
  }
  r = next();
  expect(r, "end");
  return m;
}

inline void save_checkpoint(const ForecastModel& m, const std::string& path) {
  io::write_file(path, checkpoint_to_string(m));
}

inline ForecastModel load_checkpoint(const std::string& path) {
  return checkpoint_from_string(io::read_file(path));
}

}  // namespace exarnn
