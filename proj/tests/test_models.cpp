#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "exarnn/checkpoint.hpp"
#include "exarnn/models.hpp"

using namespace exarnn;
using Catch::Approx;

namespace {

// Small aligned series: n power steps 15 min apart, environment every
// `ratio` steps, already on a z-score-like scale.
AlignedSeries tiny_series(std::size_t n, std::size_t ratio, std::uint64_t seed = 1,
                          std::size_t dx = 1, std::size_t dw = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  AlignedSeries s;
  for (std::size_t c = 0; c < dx; ++c) s.power.names.push_back("p" + std::to_string(c));
  for (std::size_t c = 0; c < dw; ++c) s.env.names.push_back("e" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 1000.0 + 900.0 * static_cast<double>(i);
    s.power.times.push_back(t);
    std::vector<double> row;
    for (std::size_t c = 0; c < dx; ++c) row.push_back(g(rng));
    s.power.values.push_back(row);
    if (i % ratio == 0) {
      std::vector<double> e;
      for (std::size_t c = 0; c < dw; ++c) e.push_back(g(rng));
      s.env.times.push_back(t);
      s.env.values.push_back(e);
    }
  }
  return s;
}

ForecastModel tiny_model(Variant v, const AlignedSeries& s, std::uint64_t seed = 3,
                         SolverSpec solver = {SolverMethod::Rk4, 2}) {
  ModelDims d;
  d.d_x = s.power.dim();
  d.d_w = s.env.dim();
  d.d_h = 3;
  d.d_z = 2;
  d.hidden_width = 4;
  ModelOptions o;
  o.solver = solver;
  auto m = ForecastModel::create(v, d, o, seed);
  m.set_time_scale(TimeScale::fit(s.power.times));
  return m;
}

// ---- plain-double reference implementations --------------------------------

Array vtanh(Array a) {
  for (double& v : a.flat()) v = std::tanh(v);
  return a;
}
Array vadd(Array a, const Array& b) {
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  return a;
}
Array vscale(Array a, double s) {
  for (double& v : a.flat()) v *= s;
  return a;
}
Array affine(const ParamStore& p, const std::string& prefix, const Array& x) {
  return vadd(matmul(p.at(prefix + ".W"), x), p.at(prefix + ".b"));
}
Array col(const std::vector<double>& v) { return Array(v.size(), 1, v); }

using PlainRhs = std::function<Array(double, const Array&)>;

Array plain_integrate(const PlainRhs& f, Array z, double t0, double t1, const SolverSpec& spec) {
  if (t1 == t0) return z;
  const std::size_t n = spec.steps_per_interval;
  const double h = (t1 - t0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n);
    if (spec.method == SolverMethod::Euler) {
      z = vadd(z, vscale(f(s, z), h));
    } else {
      const Array k1 = f(s, z);
      const Array k2 = f(s + h / 2, vadd(z, vscale(k1, h / 2)));
      const Array k3 = f(s + h / 2, vadd(z, vscale(k2, h / 2)));
      const Array k4 = f(s + h, vadd(z, vscale(k3, h)));
      z = vadd(z, vscale(vadd(vadd(k1, vscale(k2, 2)), vadd(vscale(k3, 2), k4)), h / 6));
    }
  }
  return z;
}

Array plain_hhat(const ForecastModel& m, const Array& z, std::size_t p) {
  const auto& ps = m.params();
  Array out = vscale(vtanh(affine(ps, "hhat.out", vtanh(affine(ps, "hhat.in", z)))), m.options().field_gain);
  return out.reshaped(m.dims().d_z, p);
}

std::vector<double> model_time(const ForecastModel& m, const AlignedSeries& s, const std::vector<double>& t) {
  std::vector<double> out;
  for (double v : t) out.push_back((v - s.power.times.front()) / m.time_scale().span);
  return out;
}

std::vector<Array> plain_flow(const ForecastModel& m, const ControlPath& path, Array z,
                              const std::vector<double>& q) {
  std::vector<Array> out{z};
  for (std::size_t i = 1; i < q.size(); ++i) {
    auto f = [&](double s, const Array& zz) { return matmul(plain_hhat(m, zz, path.dim()), col(path.deriv(s))); };
    z = plain_integrate(f, z, q[i - 1], q[i], m.options().solver);
    out.push_back(z);
  }
  return out;
}

std::vector<double> plain_exarnn(const ForecastModel& m, const AlignedSeries& s) {
  const auto& ps = m.params();
  const auto path = build_path(model_time(m, s, s.env.times), s.env.values);
  auto tq = model_time(m, s, s.power.times);
  tq.pop_back();
  const auto flow = plain_flow(m, path, affine(ps, "l1", col(path.eval(tq[0]))), tq);
  const std::size_t dh = m.dims().d_h;
  Array h(dh, 1);
  std::vector<double> out;
  for (std::size_t i = 0; i < tq.size(); ++i) {
    const Array theta = vscale(affine(ps, "l2", flow[i]).reshaped(dh, dh), 1 / std::sqrt(double(dh)));
    h = vtanh(vadd(vadd(matmul(ps.at("W1"), col(s.power.values[i])), matmul(theta, h)), ps.at("b1")));
    out.push_back(vadd(matmul(ps.at("W2"), h), ps.at("b2"))[0]);
  }
  return out;
}

std::vector<double> plain_cell(const ForecastModel& m, std::size_t n,
                               const std::function<std::vector<double>(std::size_t)>& input,
                               const std::function<Array(std::size_t, const Array&)>& drift) {
  const auto& ps = m.params();
  Array h(m.dims().d_h, 1);
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (i > 0) h = drift(i, h);
    h = vtanh(vadd(vadd(matmul(ps.at("Wx"), col(input(i))), matmul(ps.at("Wh"), h)), ps.at("b1")));
    out.push_back(vadd(matmul(ps.at("W2"), h), ps.at("b2"))[0]);
  }
  return out;
}

// Index of the latest environment sample at or before power step i.
std::size_t latest(const AlignedSeries& s, std::size_t i) {
  std::size_t j = 0;
  for (std::size_t k = 0; k < s.env.size(); ++k)
    if (s.env.times[k] <= s.power.times[i]) j = k;
  return j;
}

std::vector<double> plain_reference(const ForecastModel& m, const AlignedSeries& s) {
  const std::size_t n = s.steps();
  const auto id = [](std::size_t, const Array& h) { return h; };
  switch (m.variant()) {
    case Variant::ExArnn: return plain_exarnn(m, s);
    case Variant::Rnn: {
      const auto path = build_path(model_time(m, s, s.env.times), s.env.values);
      const auto tq = model_time(m, s, s.power.times);
      return plain_cell(m, n, [&](std::size_t i) {
        return std::vector<double>{s.power.values[i][0], path.eval(tq[i])[0]};
      }, id);
    }
    case Variant::RnnDt:
      return plain_cell(m, n, [&](std::size_t i) {
        const std::size_t j = latest(s, i);
        return std::vector<double>{s.power.values[i][0], s.env.values[j][0],
                                   (s.power.times[i] - s.env.times[j]) / 900.0};
      }, id);
    case Variant::OdeRnn:
      return plain_cell(m, n, [&](std::size_t i) {
        return std::vector<double>{s.power.values[i][0], s.env.values[latest(s, i)][0]};
      }, [&](std::size_t i, const Array& h) {
        const auto& ps = m.params();
        auto f = [&](double, const Array& z) {
          return vscale(vtanh(affine(ps, "field.out", vtanh(affine(ps, "field.in", z)))), m.options().field_gain);
        };
        return plain_integrate(f, h, 0, (s.power.times[i] - s.power.times[i - 1]) / 900.0, m.options().solver);
      });
    case Variant::Ncde: {
      const auto env = build_path(model_time(m, s, s.env.times), s.env.values);
      const auto tq = model_time(m, s, s.power.times);
      std::vector<std::vector<double>> joint;
      for (std::size_t i = 0; i < n; ++i) joint.push_back({s.power.values[i][0], env.eval(tq[i])[0]});
      const auto path = build_path(tq, joint);
      std::vector<double> q(tq.begin(), tq.end() - 1);
      const auto flow = plain_flow(m, path, affine(m.params(), "l1", col(path.eval(tq[0]))), q);
      std::vector<double> out;
      for (const auto& z : flow) out.push_back(affine(m.params(), "readout", z)[0]);
      return out;
    }
  }
  return {};
}

void zero_all(ForecastModel& m) {
  for (auto& p : m.params().all()) p.value.fill(0.0);
}

}  // namespace

TEST_CASE("hand-computed hypernetwork RNN step", "[models]") {
  Tape tape;
  auto c = [&](double v) { return tape.constant(Array::scalar(v)); };
  const auto r = hyper_rnn_step(c(0.5), c(2.0), c(0.0), c(0.1), c(0.0), c(0.8), c(0.0));
  CHECK(r.hidden.value().item() == Approx(std::tanh(0.4)).epsilon(1e-15));
  CHECK(r.hidden.value().item() == Approx(0.379949).margin(1e-6));
  CHECK(r.prediction.value().item() == Approx(0.8598979).margin(1e-7));

  // With a nonzero recurrent weight the previous state enters.
  const auto r2 = hyper_rnn_step(c(0.5), c(2.0), c(0.0), c(0.1), c(0.25), c(0.8), c(1.0));
  CHECK(r2.hidden.value().item() == Approx(std::tanh(0.65)).epsilon(1e-15));
}

TEST_CASE("every variant matches a plain-double reference", "[models]") {
  const auto s = tiny_series(9, 2);
  for (Variant v : all_variants()) {
    for (auto method : {SolverMethod::Euler, SolverMethod::Rk4}) {
      const auto m = tiny_model(v, s, 3, {method, 2});
      const auto got = m.predict(s);
      const auto want = plain_reference(m, s);
      REQUIRE(got.size() == want.size());
      for (std::size_t k = 0; k < got.size(); ++k) {
        INFO(to_string(v) << " step " << k);
        CHECK(got[k][0] == Approx(want[k]).margin(1e-12));
      }
    }
  }
}

TEST_CASE("one-step contract: n - 1 predictions for every variant", "[models][property]") {
  for (std::size_t n : {2u, 3u, 10u}) {
    const auto s = tiny_series(n, 2, n);
    for (Variant v : all_variants()) {
      const auto m = tiny_model(v, s);
      CHECK(m.predict(s).size() == n - 1);
    }
  }
}

TEST_CASE("zero parameters give zero predictions", "[models]") {
  const auto s = tiny_series(6, 2);
  for (Variant v : all_variants()) {
    auto m = tiny_model(v, s);
    zero_all(m);
    for (const auto& p : m.predict(s)) CHECK(p[0] == 0.0);
  }
  auto ncde = tiny_model(Variant::Ncde, s);
  ncde.params().at("readout.W").fill(0.0);
  ncde.params().at("readout.b").fill(0.0);
  for (const auto& p : ncde.predict(s)) CHECK(p[0] == 0.0);
}

TEST_CASE("zero recurrent generator reduces ExARNN to a feed-forward map", "[models]") {
  const auto s = tiny_series(6, 2);
  auto m = tiny_model(Variant::ExArnn, s);
  m.params().at("l2.W").fill(0.0);
  m.params().at("l2.b").fill(0.0);
  const auto& p = m.params();
  const auto preds = m.predict(s);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Array h = vtanh(vadd(matmul(p.at("W1"), col(s.power.values[i])), p.at("b1")));
    CHECK(preds[i][0] == Approx(vadd(matmul(p.at("W2"), h), p.at("b2"))[0]).margin(1e-14));
  }
}

TEST_CASE("ExARNN with a frozen flow equals an RNN with that recurrent matrix", "[models][property]") {
  const auto s = tiny_series(10, 3);
  auto ex = tiny_model(Variant::ExArnn, s, 5);
  ex.params().at("hhat.out.W").fill(0.0);
  ex.params().at("hhat.out.b").fill(0.0);

  // theta1 is constant: l2(l1(W(t0))) / sqrt(d_h).
  Tape tape;
  Bound b(tape, ex.params());
  const auto thetas = ex.build_exarnn(tape, b, s, 1);
  const Array theta = thetas.front().value();

  auto rnn = tiny_model(Variant::Rnn, s, 6);
  Array wx(3, 2);
  for (std::size_t r = 0; r < 3; ++r) wx(r, 0) = ex.params().at("W1")(r, 0);
  rnn.params().at("Wx") = wx;
  rnn.params().at("Wh") = theta;
  rnn.params().at("b1") = ex.params().at("b1");
  rnn.params().at("W2") = ex.params().at("W2");
  rnn.params().at("b2") = ex.params().at("b2");

  const auto a = ex.predict(s), c = rnn.predict(s);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k][0] == Approx(c[k][0]).margin(1e-13));
}

TEST_CASE("theta1 responds to the environment", "[models][property]") {
  auto s = tiny_series(12, 2, 4);
  const auto m = tiny_model(Variant::ExArnn, s, 2);
  auto thetas_of = [&](const AlignedSeries& series) {
    Tape tape;
    Bound b(tape, m.params());
    std::vector<Array> out;
    for (Var v : m.build_exarnn(tape, b, series, series.steps())) out.push_back(v.value());
    return out;
  };
  const auto base = thetas_of(s);
  auto permuted = s;
  std::reverse(permuted.env.values.begin(), permuted.env.values.end());
  const auto moved = thetas_of(permuted);
  double diff = 0;
  for (std::size_t i = 1; i < base.size(); ++i)
    for (std::size_t k = 0; k < base[i].size(); ++k) diff += std::abs(base[i][k] - moved[i][k]);
  CHECK(diff > 1e-6);
  // theta1 varies along the series.
  double drift = 0;
  for (std::size_t k = 0; k < base[0].size(); ++k) drift += std::abs(base.back()[k] - base[0][k]);
  CHECK(drift > 1e-6);
}

TEST_CASE("forward is deterministic and seeds matter", "[models][property]") {
  const auto s = tiny_series(8, 2);
  for (Variant v : all_variants()) {
    CHECK(tiny_model(v, s, 9).predict(s) == tiny_model(v, s, 9).predict(s));
    CHECK(tiny_model(v, s, 9).params() != tiny_model(v, s, 10).params());
  }
}

TEST_CASE("parameter groups per variant", "[models]") {
  const auto s = tiny_series(4, 2);
  const auto ex = tiny_model(Variant::ExArnn, s);
  std::vector<std::string> theta0, psi;
  for (const auto& p : ex.params().all()) (p.group == ParamGroup::Theta0 ? theta0 : psi).push_back(p.name);
  CHECK(theta0 == std::vector<std::string>{"W1", "b1", "W2", "b2"});
  CHECK(psi.size() == 8);
  CHECK(ex.params().at("l2.W").shape() == Shape{9, 2});
  CHECK(ex.params().at("hhat.out.W").shape() == Shape{2 * 2, 4});
  for (Variant v : {Variant::Rnn, Variant::RnnDt, Variant::OdeRnn, Variant::Ncde})
    for (const auto& p : tiny_model(v, s).params().all()) CHECK(p.group == ParamGroup::Static);
  CHECK(tiny_model(Variant::RnnDt, s).params().at("Wx").shape() == Shape{3, 3});
}

TEST_CASE("model rejects series with the wrong dimensions", "[models]") {
  const auto s = tiny_series(6, 2);
  const auto wide = tiny_series(6, 2, 1, 1, 2);
  for (Variant v : all_variants()) {
    const auto m = tiny_model(v, s);
    CHECK_THROWS_AS(m.predict(wide), DimensionError);
    CHECK_THROWS_AS(m.predict(tiny_series(1, 1)), InsufficientDataError);
  }
}

TEST_CASE("checkpoint round trip is bit-exact", "[models][checkpoint]") {
  const auto s = tiny_series(8, 2);
  for (Variant v : all_variants()) {
    auto m = tiny_model(v, s, 21);
    m.set_stats({{1.5}, {0.25}, {false}}, {{-3.0}, {1.0}, {true}});
    const std::string text = checkpoint_to_string(m);
    const auto back = checkpoint_from_string(text);
    CHECK(back.params() == m.params());
    CHECK(back.variant() == m.variant());
    CHECK(back.dims() == m.dims());
    CHECK(back.options() == m.options());
    CHECK(back.time_scale() == m.time_scale());
    CHECK(back.power_stats() == m.power_stats());
    CHECK(back.env_stats() == m.env_stats());
    CHECK(back.predict(s) == m.predict(s));
    CHECK(checkpoint_to_string(back) == text);
  }
}

TEST_CASE("corrupt checkpoints are rejected", "[models][checkpoint]") {
  const auto s = tiny_series(4, 2);
  const std::string good = checkpoint_to_string(tiny_model(Variant::Rnn, s));
  CHECK_THROWS_AS(checkpoint_from_string(""), DataError);
  CHECK_THROWS_AS(checkpoint_from_string("exarnn-checkpoint 99\n"), DataError);
  std::string bad = good;
  bad.replace(bad.find("param Wx static 3 2"), 19, "param Wx static 3 9");
  CHECK_THROWS_AS(checkpoint_from_string(bad), DataError);
  CHECK_THROWS_AS(checkpoint_from_string(good.substr(0, good.size() / 2)), DataError);
}
