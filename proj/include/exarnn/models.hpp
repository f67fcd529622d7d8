#pragma once

// One-step-ahead forecasters: ExARNN and four baselines.
//
// ExARNN runs a tanh RNN whose recurrent matrix theta1(t_i) is produced by a
// hypernetwork: a natural cubic spline over the environment samples drives a
// neural CDE flow z(t), and a linear layer maps z(t_i) to theta1(t_i).
//
//   z(t_1)      = l1(W(t_1))
//   z(t_i)      = z(t_{i-1}) + integral hhat(z(s)) dW/ds ds
//   theta1(t_i) = reshape(l2(z(t_i))) / sqrt(d_h)
//   h_i         = tanh(W1 x_i + theta1(t_i) h_{i-1} + b1)
//   xhat_{i+1}  = W2 h_i + b2
//
// Only theta0 = {W1, W2, b1, b2} and psi = {l1, l2, hhat} are parameters;
// theta1 is an intermediate on the tape.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "exarnn/autodiff.hpp"
#include "exarnn/data.hpp"
#include "exarnn/errors.hpp"
#include "exarnn/odeflow.hpp"
#include "exarnn/spline.hpp"

namespace exarnn {

enum class Variant { ExArnn, Rnn, RnnDt, OdeRnn, Ncde };

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::Rnn, Variant::RnnDt, Variant::OdeRnn, Variant::Ncde,
                                      Variant::ExArnn};
  return v;
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::ExArnn: return "exarnn";
    case Variant::Rnn: return "rnn";
    case Variant::RnnDt: return "rnn_dt";
    case Variant::OdeRnn: return "ode_rnn";
    case Variant::Ncde: return "ncde";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : all_variants()) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown model variant '" + s + "'");
}

// theta0: static main-RNN weights of ExARNN. psi: its hypernetwork.
// Baselines put everything in Static.
enum class ParamGroup { Theta0, Psi, Static };

inline std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Theta0: return "theta0";
    case ParamGroup::Psi: return "psi";
    case ParamGroup::Static: return "static";
  }
  return "?";
}

inline ParamGroup parse_param_group(const std::string& s) {
  if (s == "theta0") return ParamGroup::Theta0;
  if (s == "psi") return ParamGroup::Psi;
  if (s == "static") return ParamGroup::Static;
  throw DataError("unknown parameter group '" + s + "'");
}

struct Parameter {
  std::string name;
  ParamGroup group{ParamGroup::Static};
  Array value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

class ParamStore {
 public:
  Parameter& add(std::string name, ParamGroup group, Array value) {
    if (find(name) != npos) throw ContractError("duplicate parameter '" + name + "'");
    params_.push_back({std::move(name), group, std::move(value)});
    return params_.back();
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return npos;
  }
  std::size_t index(const std::string& name) const {
    const std::size_t i = find(name);
    if (i == npos) throw ContractError("no parameter named '" + name + "'");
    return i;
  }
  Array& at(const std::string& name) { return params_[index(name)].value; }
  const Array& at(const std::string& name) const { return params_[index(name)].value; }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<Parameter> params_;
};

// Parameters placed on a tape as differentiable leaves, in store order.
class Bound {
 public:
  Bound(Tape& tape, const ParamStore& store) : store_(&store) {
    vars_.reserve(store.size());
    for (const auto& p : store.all()) vars_.push_back(tape.variable(p.value));
  }
  Var operator[](const std::string& name) const { return vars_[store_->index(name)]; }
  const std::vector<Var>& vars() const { return vars_; }

 private:
  const ParamStore* store_;
  std::vector<Var> vars_;
};

struct ModelDims {
  std::size_t d_x{1};
  std::size_t d_w{1};
  std::size_t d_h{16};
  std::size_t d_z{8};
  std::size_t hidden_width{32};  // hidden layer of the vector-field networks

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Maps epoch seconds onto model time. Model time is measured from the first
// power timestamp of the series being processed, in units of the training
// span, so the training series covers [0, 1] and every series starts at 0.
// Step-count features (RNN-dt, the ODE-RNN drift) use power intervals.
struct TimeScale {
  double span{1.0};
  double interval{1.0};

  double normalized(double t, double origin) const { return (t - origin) / span; }
  double intervals(double dt) const { return dt / interval; }

  static TimeScale fit(const std::vector<double>& times) {
    if (times.size() < 2) throw InsufficientDataError("time scale needs at least 2 timestamps");
    TimeScale ts;
    ts.span = times.back() - times.front();
    if (!(ts.span > 0)) ts.span = 1.0;
    ts.interval = detail::median_spacing(times);
    if (!(ts.interval > 0)) ts.interval = 1.0;
    return ts;
  }

  friend bool operator==(const TimeScale&, const TimeScale&) = default;
};

struct ModelOptions {
  SolverSpec solver{};
  double field_gain{1.0};  // hhat output = gain * tanh(...)

  friend bool operator==(const ModelOptions& a, const ModelOptions& b) {
    return a.solver.method == b.solver.method &&
           a.solver.steps_per_interval == b.solver.steps_per_interval &&
           a.field_gain == b.field_gain;
  }
};

namespace detail {

inline Array uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                          std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Array a(rows, cols);
  for (double& v : a.flat()) v = dist(rng);
  return a;
}

inline void add_linear(ParamStore& store, const std::string& prefix, ParamGroup g,
                       std::size_t out, std::size_t in, std::mt19937_64& rng) {
  store.add(prefix + ".W", g, uniform_init(out, in, in, rng));
  store.add(prefix + ".b", g, uniform_init(out, 1, in, rng));
}

inline Var linear(const Bound& p, const std::string& prefix, Var x) {
  return add(matmul(p[prefix + ".W"], x), p[prefix + ".b"]);
}

inline Var column_constant(Tape& tape, std::vector<double> v) {
  const std::size_t n = v.size();
  return tape.constant(Array(n, 1, std::move(v)));
}

inline void require_steps(const AlignedSeries& s) {
  if (s.steps() < 2) {
    throw InsufficientDataError("forecasting needs at least 2 power steps, got " +
                                std::to_string(s.steps()));
  }
}

}  // namespace detail

// Output of one hypernetwork-controlled RNN step.
struct StepResult {
  Var hidden;
  Var prediction;
};

// h = tanh(W1 x + theta1 h_prev + b1), xhat = W2 h + b2.
inline StepResult hyper_rnn_step(Var w1, Var w2, Var b1, Var b2, Var theta1, Var x, Var h_prev) {
  Var h = tanh(add(add(matmul(w1, x), matmul(theta1, h_prev)), b1));
  return {h, add(matmul(w2, h), b2)};
}

class ForecastModel {
 public:
  ForecastModel() = default;

  static ForecastModel create(Variant variant, const ModelDims& dims, const ModelOptions& options,
                              std::uint64_t seed) {
    ForecastModel m;
    m.variant_ = variant;
    m.dims_ = dims;
    m.options_ = options;
    std::mt19937_64 rng(seed);
    const std::size_t dx = dims.d_x, dw = dims.d_w, dh = dims.d_h, dz = dims.d_z,
                      width = dims.hidden_width;
    const std::size_t path_dim = dw + 1;
    auto& s = m.params_;
    switch (variant) {
      case Variant::ExArnn:
        s.add("W1", ParamGroup::Theta0, detail::uniform_init(dh, dx, dx, rng));
        s.add("b1", ParamGroup::Theta0, detail::uniform_init(dh, 1, dx, rng));
        s.add("W2", ParamGroup::Theta0, detail::uniform_init(dx, dh, dh, rng));
        s.add("b2", ParamGroup::Theta0, detail::uniform_init(dx, 1, dh, rng));
        detail::add_linear(s, "l1", ParamGroup::Psi, dz, path_dim, rng);
        detail::add_linear(s, "l2", ParamGroup::Psi, dh * dh, dz, rng);
        detail::add_linear(s, "hhat.in", ParamGroup::Psi, width, dz, rng);
        detail::add_linear(s, "hhat.out", ParamGroup::Psi, dz * path_dim, width, rng);
        break;
      case Variant::Rnn:
      case Variant::RnnDt:
      case Variant::OdeRnn: {
        const std::size_t in = dx + dw + (variant == Variant::RnnDt ? 1 : 0);
        s.add("Wx", ParamGroup::Static, detail::uniform_init(dh, in, in, rng));
        s.add("Wh", ParamGroup::Static, detail::uniform_init(dh, dh, dh, rng));
        s.add("b1", ParamGroup::Static, detail::uniform_init(dh, 1, in, rng));
        s.add("W2", ParamGroup::Static, detail::uniform_init(dx, dh, dh, rng));
        s.add("b2", ParamGroup::Static, detail::uniform_init(dx, 1, dh, rng));
        if (variant == Variant::OdeRnn) {
          detail::add_linear(s, "field.in", ParamGroup::Static, width, dh, rng);
          detail::add_linear(s, "field.out", ParamGroup::Static, dh, width, rng);
        }
        break;
      }
      case Variant::Ncde: {
        const std::size_t joint_dim = dx + dw + 1;
        detail::add_linear(s, "l1", ParamGroup::Static, dz, joint_dim, rng);
        detail::add_linear(s, "hhat.in", ParamGroup::Static, width, dz, rng);
        detail::add_linear(s, "hhat.out", ParamGroup::Static, dz * joint_dim, width, rng);
        detail::add_linear(s, "readout", ParamGroup::Static, dx, dz, rng);
        break;
      }
    }
    return m;
  }

  Variant variant() const { return variant_; }
  const ModelDims& dims() const { return dims_; }
  const ModelOptions& options() const { return options_; }
  ModelOptions& options() { return options_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const TimeScale& time_scale() const { return time_scale_; }
  void set_time_scale(const TimeScale& ts) { time_scale_ = ts; }
  const ChannelStats& power_stats() const { return power_stats_; }
  const ChannelStats& env_stats() const { return env_stats_; }
  void set_stats(ChannelStats power, ChannelStats env) {
    power_stats_ = std::move(power);
    env_stats_ = std::move(env);
  }

  // Predictions of x(t_1), ..., x(t_{n-1}) from teacher-forced inputs
  // x(t_0), ..., x(t_{n-2}). Result[k] predicts power step k + 1.
  std::vector<Var> forward(Tape& tape, const Bound& p, const AlignedSeries& s) const {
    detail::require_steps(s);
    check_series(s);
    switch (variant_) {
      case Variant::ExArnn: return forward_exarnn(tape, p, s);
      case Variant::Rnn: return forward_rnn(tape, p, s);
      case Variant::RnnDt: return forward_rnn_dt(tape, p, s);
      case Variant::OdeRnn: return forward_ode_rnn(tape, p, s);
      case Variant::Ncde: return forward_ncde(tape, p, s);
    }
    return {};
  }

  // Plain values of forward() on a scratch tape.
  std::vector<std::vector<double>> predict(const AlignedSeries& s) const {
    Tape tape;
    Bound p(tape, params_);
    std::vector<std::vector<double>> out;
    for (Var v : forward(tape, p, s)) {
      const auto& a = v.value();
      out.emplace_back(a.flat().begin(), a.flat().end());
    }
    return out;
  }

  // Timestamps of `s` (power or environment) in model time.
  std::vector<double> model_times(const AlignedSeries& s, const std::vector<double>& t) const {
    const double origin = s.power.times.front();
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = time_scale_.normalized(t[i], origin);
    return out;
  }

  // Control path over the environment samples. A single sample gives a
  // constant path spanning the power series.
  ControlPath environment_path(const AlignedSeries& s) const {
    if (s.env.size() == 0) throw InsufficientDataError("environment series is empty");
    std::vector<double> knots = model_times(s, s.env.times);
    std::vector<std::vector<double>> values = s.env.values;
    if (knots.size() == 1) {
      double end = time_scale_.normalized(s.power.times.back(), s.power.times.front());
      if (!(end > knots[0])) end = knots[0] + 1.0;
      knots.push_back(end);
      values.push_back(values.front());
    }
    return ControlPath::build(knots, values);
  }

  // hhat as a MatrixField bound to the parameters on `p`.
  MatrixField hhat_field(const Bound& p, std::size_t path_dim) const {
    const double gain = options_.field_gain;
    const std::size_t dz = dims_.d_z;
    const Var a = p["hhat.in.W"], a_b = p["hhat.in.b"];
    const Var o = p["hhat.out.W"], o_b = p["hhat.out.b"];
    return [=](Var z) {
      Var hidden = tanh(add(matmul(a, z), a_b));
      Var out = scale(tanh(add(matmul(o, hidden), o_b)), gain);
      return reshape(out, dz, path_dim);
    };
  }

  // theta1(t_i) for the first `count` power timestamps (all of them when
  // count is larger than the series).
  std::vector<Var> build_exarnn(Tape& tape, const Bound& p, const AlignedSeries& s,
                                std::size_t count) const {
    const ControlPath path = environment_path(s);
    std::vector<double> tq = model_times(s, s.power.times);
    tq.resize(std::min(count, tq.size()));
    if (tq.empty()) return {};
    Var w0 = detail::column_constant(tape, path.eval(tq.front()));
    Var z0 = detail::linear(p, "l1", w0);
    const auto flow = eval_flow(hhat_field(p, path.dim()), z0, path, tq, options_.solver);
    const std::size_t dh = dims_.d_h;
    const double norm = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> theta1;
    theta1.reserve(flow.size());
    const Var l2w = p["l2.W"], l2b = p["l2.b"];
    for (Var z : flow) theta1.push_back(scale(reshape(add(matmul(l2w, z), l2b), dh, dh), norm));
    return theta1;
  }

 private:
  void check_series(const AlignedSeries& s) const {
    if (s.power.dim() != dims_.d_x) {
      throw DimensionError("model expects " + std::to_string(dims_.d_x) +
                           " power channels, series has " + std::to_string(s.power.dim()));
    }
    if (s.env.dim() != dims_.d_w) {
      throw DimensionError("model expects " + std::to_string(dims_.d_w) +
                           " environment channels, series has " + std::to_string(s.env.dim()));
    }
  }

  std::vector<Var> forward_exarnn(Tape& tape, const Bound& p, const AlignedSeries& s) const {
    const std::size_t n = s.steps();
    const auto theta1 = build_exarnn(tape, p, s, n - 1);
    const Var w1 = p["W1"], w2 = p["W2"], b1 = p["b1"], b2 = p["b2"];
    Var h = tape.constant(Array(dims_.d_h, 1));
    std::vector<Var> preds;
    preds.reserve(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      Var x = detail::column_constant(tape, s.power.values[i]);
      auto step = hyper_rnn_step(w1, w2, b1, b2, theta1[i], x, h);
      h = step.hidden;
      preds.push_back(step.prediction);
    }
    return preds;
  }

  // Shared tanh cell over arbitrary per-step inputs, with an optional drift
  // applied to the hidden state before each update.
  template <typename Inputs, typename Drift>
  std::vector<Var> run_cell(Tape& tape, const Bound& p, std::size_t n, Inputs inputs,
                            Drift drift) const {
    const Var wx = p["Wx"], wh = p["Wh"], b1 = p["b1"], w2 = p["W2"], b2 = p["b2"];
    Var h = tape.constant(Array(dims_.d_h, 1));
    std::vector<Var> preds;
    preds.reserve(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (i > 0) h = drift(i, h);
      Var u = detail::column_constant(tape, inputs(i));
      h = tanh(add(add(matmul(wx, u), matmul(wh, h)), b1));
      preds.push_back(add(matmul(w2, h), b2));
    }
    return preds;
  }

  std::vector<Var> forward_rnn(Tape& tape, const Bound& p, const AlignedSeries& s) const {
    const ControlPath path = environment_path(s);
    const auto tq = model_times(s, s.power.times);
    const std::size_t dw = dims_.d_w;
    return run_cell(
        tape, p, s.steps(),
        [&](std::size_t i) {
          std::vector<double> u = s.power.values[i];
          const auto w = path.eval(tq[i]);
          u.insert(u.end(), w.begin(), w.begin() + static_cast<std::ptrdiff_t>(dw));
          return u;
        },
        [](std::size_t, Var h) { return h; });
  }

  // Most recent environment sample at or before each power step, and the
  // time since it (in power intervals). Steps before the first sample use the
  // first sample with zero elapsed time.
  std::vector<std::pair<std::size_t, double>> latest_env(const AlignedSeries& s) const {
    if (s.env.size() == 0) throw InsufficientDataError("environment series is empty");
    std::vector<std::pair<std::size_t, double>> out(s.steps());
    std::size_t j = 0;
    for (std::size_t i = 0; i < s.steps(); ++i) {
      const double t = s.power.times[i];
      while (j + 1 < s.env.size() && s.env.times[j + 1] <= t) ++j;
      const double dt = t >= s.env.times[j] ? time_scale_.intervals(t - s.env.times[j]) : 0.0;
      out[i] = {j, dt};
    }
    return out;
  }

  std::vector<Var> forward_rnn_dt(Tape& tape, const Bound& p, const AlignedSeries& s) const {
    const auto latest = latest_env(s);
    return run_cell(
        tape, p, s.steps(),
        [&](std::size_t i) {
          std::vector<double> u = s.power.values[i];
          const auto& w = s.env.values[latest[i].first];
          u.insert(u.end(), w.begin(), w.end());
          u.push_back(latest[i].second);
          return u;
        },
        [](std::size_t, Var h) { return h; });
  }

  std::vector<Var> forward_ode_rnn(Tape& tape, const Bound& p, const AlignedSeries& s) const {
    const auto latest = latest_env(s);
    const double gain = options_.field_gain;
    const Var a = p["field.in.W"], a_b = p["field.in.b"];
    const Var o = p["field.out.W"], o_b = p["field.out.b"];
    VectorField field = [=](Var h) {
      Var hidden = tanh(add(matmul(a, h), a_b));
      return scale(tanh(add(matmul(o, hidden), o_b)), gain);
    };
    return run_cell(
        tape, p, s.steps(),
        [&](std::size_t i) {
          std::vector<double> u = s.power.values[i];
          const auto& w = s.env.values[latest[i].first];
          u.insert(u.end(), w.begin(), w.end());
          return u;
        },
        [&](std::size_t i, Var h) {
          const double dt = time_scale_.intervals(s.power.times[i] - s.power.times[i - 1]);
          return solve_ivp(field, h, 0.0, dt, options_.solver);
        });
  }

  std::vector<Var> forward_ncde(Tape& tape, const Bound& p, const AlignedSeries& s) const {
    const std::size_t n = s.steps();
    const ControlPath env_path = environment_path(s);
    const auto tq = model_times(s, s.power.times);
    // Joint path over (x, w, t) on the power timestamps.
    std::vector<std::vector<double>> joint(n);
    for (std::size_t i = 0; i < n; ++i) {
      joint[i] = s.power.values[i];
      const auto w = env_path.eval(tq[i]);
      joint[i].insert(joint[i].end(), w.begin(), w.begin() + static_cast<std::ptrdiff_t>(dims_.d_w));
    }
    const ControlPath path = ControlPath::build(tq, joint);
    std::vector<double> queries(tq.begin(), tq.end() - 1);
    Var z0 = detail::linear(p, "l1", detail::column_constant(tape, path.eval(tq.front())));
    const auto flow = eval_flow(hhat_field(p, path.dim()), z0, path, queries, options_.solver);
    std::vector<Var> preds;
    preds.reserve(n - 1);
    for (Var z : flow) preds.push_back(detail::linear(p, "readout", z));
    return preds;
  }

  Variant variant_{Variant::ExArnn};
  ModelDims dims_{};
  ModelOptions options_{};
  ParamStore params_;
  TimeScale time_scale_{};
  ChannelStats power_stats_;
  ChannelStats env_stats_;
};

}  // namespace exarnn
