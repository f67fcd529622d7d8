#pragma once

// Fixed-step ODE and controlled-differential-equation integrators that record
// onto a Tape, so gradients flow back through every solver stage.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "exarnn/autodiff.hpp"
#include "exarnn/errors.hpp"
#include "exarnn/spline.hpp"

namespace exarnn {

enum class SolverMethod { Euler, Rk4 };

struct SolverSpec {
  SolverMethod method{SolverMethod::Rk4};
  std::size_t steps_per_interval{4};
};

inline std::string to_string(SolverMethod m) { return m == SolverMethod::Euler ? "euler" : "rk4"; }

inline SolverMethod parse_solver_method(const std::string& s) {
  if (s == "euler") return SolverMethod::Euler;
  if (s == "rk4") return SolverMethod::Rk4;
  throw ConfigError("unknown solver method '" + s + "' (expected euler or rk4)");
}

// z (d_z x 1) -> dz/dt (d_z x 1).
using VectorField = std::function<Var(Var)>;
// z (d_z x 1) -> d_z x dim(W) matrix.
using MatrixField = std::function<Var(Var)>;

namespace detail {

// Right-hand side as a function of (time, state).
using Rhs = std::function<Var(double, Var)>;

inline Var integrate(const Rhs& f, Var z, double t0, double t1, const SolverSpec& spec) {
  if (spec.steps_per_interval == 0) throw ContractError("solver needs steps_per_interval >= 1");
  if (t1 < t0) {
    throw OrderingError("solver: end time " + std::to_string(t1) + " precedes start time " +
                        std::to_string(t0));
  }
  if (t1 == t0) return z;
  const std::size_t n = spec.steps_per_interval;
  const double h = (t1 - t0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Grid points are computed from t0 directly so the last one is exactly t1.
    const double s = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n);
    if (spec.method == SolverMethod::Euler) {
      z = add(z, scale(f(s, z), h));
    } else {
      Var k1 = f(s, z);
      Var k2 = f(s + 0.5 * h, add(z, scale(k1, 0.5 * h)));
      Var k3 = f(s + 0.5 * h, add(z, scale(k2, 0.5 * h)));
      Var k4 = f(s + h, add(z, scale(k3, h)));
      Var incr = add(add(k1, scale(k2, 2.0)), add(scale(k3, 2.0), k4));
      z = add(z, scale(incr, h / 6.0));
    }
  }
  return z;
}

inline Var check_state(Var z, Var dz, const char* who) {
  if (dz.shape() != z.shape()) {
    throw DimensionError(std::string(who) + ": field returned " + to_string(dz.shape()) +
                         " for state " + to_string(z.shape()));
  }
  return dz;
}

}  // namespace detail

// Integrates dz/dt = field(z) from t0 to t1.
inline Var solve_ivp(const VectorField& field, Var z0, double t0, double t1,
                     const SolverSpec& spec) {
  auto rhs = [&](double, Var z) { return detail::check_state(z, field(z), "solve_ivp"); };
  return detail::integrate(rhs, z0, t0, t1, spec);
}

// Integrates dz/ds = field(z(s)) * dW/ds(s) from t0 to t1. The path is data:
// its derivative enters the tape as a constant.
inline Var solve_cde(const MatrixField& field, Var z0, const ControlPath& path, double t0,
                     double t1, const SolverSpec& spec) {
  Tape& tape = *z0.tape();
  const std::size_t p = path.dim();
  auto rhs = [&](double s, Var z) {
    Var m = field(z);
    if (m.shape().cols != p) {
      throw DimensionError("solve_cde: field has " + std::to_string(m.shape().cols) +
                           " columns but control path has " + std::to_string(p) + " channels");
    }
    Array dw(p, 1);
    path.deriv_into(s, dw.flat());
    return detail::check_state(z, matmul(m, tape.constant(std::move(dw))), "solve_cde");
  };
  return detail::integrate(rhs, z0, t0, t1, spec);
}

// z(t_i) for each query time, by chaining solve_cde between consecutive
// queries. The first query is the initial time, so result[0] is z0.
inline std::vector<Var> eval_flow(const MatrixField& field, Var z0, const ControlPath& path,
                                  std::span<const double> query_times, const SolverSpec& spec) {
  std::vector<Var> out;
  if (query_times.empty()) return out;
  out.reserve(query_times.size());
  out.push_back(z0);
  for (std::size_t i = 1; i < query_times.size(); ++i) {
    out.push_back(solve_cde(field, out.back(), path, query_times[i - 1], query_times[i], spec));
  }
  return out;
}

}  // namespace exarnn
