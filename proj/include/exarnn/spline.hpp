#pragma once

// Natural cubic spline control paths.
//
// A ControlPath interpolates the augmented observations (w(t_j), t_j): every
// value channel gets its own natural cubic spline and the time itself is
// appended as the last channel. Outside the knot range evaluation clamps to
// the boundary knot; value channels then have zero derivative while the time
// channel keeps derivative 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "exarnn/errors.hpp"

namespace exarnn {

// Piecewise cubic a + b*d + c*d^2 + e*d^3 with d = t - knot[j], for one channel.
struct CubicPieces {
  std::vector<double> a, b, c, d;
};

// Second derivatives of the natural cubic spline through (x, y), solved with
// the Thomas algorithm. M_0 = M_{n-1} = 0.
inline std::vector<double> natural_second_derivatives(std::span<const double> x,
                                                      std::span<const double> y) {
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  const std::size_t k = n - 2;  // interior unknowns
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double h0 = x[i + 1] - x[i];
    const double h1 = x[i + 2] - x[i + 1];
    diag[i] = 2.0 * (h0 + h1);
    upper[i] = h1;
    rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
  }
  // Forward sweep; sub-diagonal entry of row i is h_i = x[i+1]-x[i].
  for (std::size_t i = 1; i < k; ++i) {
    const double lower = x[i + 1] - x[i];
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) {
    m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
  }
  return m;
}

inline CubicPieces natural_cubic(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const std::vector<double> m = natural_second_derivatives(x, y);
  CubicPieces p;
  p.a.resize(n - 1);
  p.b.resize(n - 1);
  p.c.resize(n - 1);
  p.d.resize(n - 1);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double h = x[j + 1] - x[j];
    p.a[j] = y[j];
    p.b[j] = (y[j + 1] - y[j]) / h - h * (2.0 * m[j] + m[j + 1]) / 6.0;
    p.c[j] = m[j] / 2.0;
    p.d[j] = (m[j + 1] - m[j]) / (6.0 * h);
  }
  return p;
}

class ControlPath {
 public:
  ControlPath() = default;

  // values[j] is the observation vector at times[j]. All vectors must have the
  // same length. The returned path has values[0].size() + 1 channels.
  static ControlPath build(std::span<const double> times,
                           const std::vector<std::vector<double>>& values) {
    if (times.size() != values.size()) {
      throw DimensionError("build_path: " + std::to_string(times.size()) + " times but " +
                           std::to_string(values.size()) + " observations");
    }
    if (times.size() < 2) {
      throw InsufficientDataError("build_path: need at least 2 knots, got " +
                                  std::to_string(times.size()));
    }
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!std::isfinite(times[j])) throw DataError("build_path: non-finite knot time");
      if (j > 0 && !(times[j] > times[j - 1])) {
        throw OrderingError("build_path: knot times not strictly increasing at index " +
                            std::to_string(j));
      }
    }
    const std::size_t width = values.front().size();
    for (const auto& v : values) {
      if (v.size() != width) throw DimensionError("build_path: ragged observation vectors");
      for (double e : v) {
        if (!std::isfinite(e)) throw DataError("build_path: non-finite observation");
      }
    }

    ControlPath path;
    path.knots_.assign(times.begin(), times.end());
    path.channels_.reserve(width + 1);
    std::vector<double> column(times.size());
    for (std::size_t ch = 0; ch < width; ++ch) {
      for (std::size_t j = 0; j < times.size(); ++j) column[j] = values[j][ch];
      path.channels_.push_back(natural_cubic(times, column));
    }
    path.channels_.push_back(natural_cubic(times, times));
    return path;
  }

  std::size_t dim() const { return channels_.size(); }
  std::size_t knot_count() const { return knots_.size(); }
  const std::vector<double>& knots() const { return knots_; }
  double t_min() const { return knots_.front(); }
  double t_max() const { return knots_.back(); }

  void eval_into(double t, std::span<double> out) const {
    check_out(out);
    const double tc = std::clamp(t, t_min(), t_max());
    const std::size_t j = interval(tc);
    const double dt = tc - knots_[j];
    for (std::size_t ch = 0; ch < channels_.size(); ++ch) {
      const CubicPieces& p = channels_[ch];
      out[ch] = p.a[j] + dt * (p.b[j] + dt * (p.c[j] + dt * p.d[j]));
    }
    // t -> t is its own natural spline; return it exactly inside the domain.
    out[channels_.size() - 1] = tc;
  }

  void deriv_into(double t, std::span<double> out) const {
    check_out(out);
    const std::size_t last = channels_.size() - 1;
    if (t < t_min() || t > t_max()) {
      std::fill(out.begin(), out.end(), 0.0);
      out[last] = 1.0;
      return;
    }
    const std::size_t j = interval(t);
    const double dt = t - knots_[j];
    for (std::size_t ch = 0; ch < last; ++ch) {
      const CubicPieces& p = channels_[ch];
      out[ch] = p.b[j] + dt * (2.0 * p.c[j] + 3.0 * dt * p.d[j]);
    }
    out[last] = 1.0;
  }

  std::vector<double> eval(double t) const {
    std::vector<double> out(dim());
    eval_into(t, out);
    return out;
  }

  std::vector<double> deriv(double t) const {
    std::vector<double> out(dim());
    deriv_into(t, out);
    return out;
  }

 private:
  // Index j of the interval [knot_j, knot_{j+1}] containing t (t already in range).
  std::size_t interval(double t) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    std::size_t j = static_cast<std::size_t>(it - knots_.begin());
    j = j == 0 ? 0 : j - 1;
    return std::min(j, knots_.size() - 2);
  }

  void check_out(std::span<double> out) const {
    if (out.size() != channels_.size()) {
      throw DimensionError("control path has " + std::to_string(channels_.size()) +
                           " channels, output buffer has " + std::to_string(out.size()));
    }
  }

  std::vector<double> knots_;
  std::vector<CubicPieces> channels_;
};

inline ControlPath build_path(std::span<const double> times,
                              const std::vector<std::vector<double>>& values) {
  return ControlPath::build(times, values);
}

}  // namespace exarnn
