#pragma once

// Sum-of-squares loss, full-batch gradient descent and finite-difference
// gradient checking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exarnn/autodiff.hpp"
#include "exarnn/errors.hpp"
#include "exarnn/models.hpp"

namespace exarnn {

// sum_k || preds[k] - targets[k] ||^2 recorded on the tape.
inline Var mse_loss(std::span<const Var> preds, const std::vector<std::vector<double>>& targets) {
  if (preds.size() != targets.size()) {
    throw ContractError("mse_loss: " + std::to_string(preds.size()) + " predictions but " +
                        std::to_string(targets.size()) + " targets");
  }
  if (preds.empty()) throw ContractError("mse_loss: no predictions");
  Tape& tape = *preds.front().tape();
  Var total;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const auto& t = targets[k];
    Var diff = sub(preds[k], tape.constant(Array(t.size(), 1, t)));
    Var sq = sum(mul(diff, diff));
    total = k == 0 ? sq : add(total, sq);
  }
  return total;
}

// Targets for forward(): power steps 1..n-1.
inline std::vector<std::vector<double>> one_step_targets(const AlignedSeries& s) {
  return {s.power.values.begin() + 1, s.power.values.end()};
}

inline double squared_error_sum(const std::vector<std::vector<double>>& preds,
                                const std::vector<std::vector<double>>& targets) {
  if (preds.size() != targets.size()) throw ContractError("squared_error_sum: length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k)
    for (std::size_t c = 0; c < preds[k].size(); ++c) {
      const double d = preds[k][c] - targets[k][c];
      acc += d * d;
    }
  return acc;
}

struct LossAndGradient {
  double loss{0.0};
  std::vector<Array> gradients;  // same order as the model's ParamStore
};

inline LossAndGradient loss_and_gradient(const ForecastModel& model, const AlignedSeries& s) {
  Tape tape;
  Bound p(tape, model.params());
  const auto preds = model.forward(tape, p, s);
  Var loss = mse_loss(preds, one_step_targets(s));
  LossAndGradient out;
  out.loss = loss.value().item();
  if (!std::isfinite(out.loss)) return out;
  tape.backward(loss);
  out.gradients.reserve(p.vars().size());
  for (Var v : p.vars()) out.gradients.push_back(v.adjoint());
  return out;
}

inline double loss_value(const ForecastModel& model, const AlignedSeries& s) {
  return squared_error_sum(model.predict(s), one_step_targets(s));
}

struct TrainConfig {
  double learning_rate{1e-2};
  std::size_t epochs{500};
  bool clip{true};
  double clip_norm{10.0};
  // Heavy-ball momentum. 0 gives plain gradient descent; anything else is an
  // extension beyond the basic update rule.
  double momentum{0.0};
};

struct TrainResult {
  std::vector<double> loss_history;  // loss before each epoch's update
  std::vector<double> val_history;   // empty unless a validation series was given
  std::vector<std::string> updated;  // names of parameters the optimizer touched
};

// Parameter groups that receive updates: theta0 and psi for ExARNN, every
// static weight for the baselines. theta1 is never stored, so it never
// appears here.
inline bool is_trainable(ParamGroup g) {
  return g == ParamGroup::Theta0 || g == ParamGroup::Psi || g == ParamGroup::Static;
}

using Validator = std::function<double(const ForecastModel&)>;

inline TrainResult train(ForecastModel& model, const AlignedSeries& series, const TrainConfig& cfg,
                         const Validator& validate) {
  if (!(cfg.learning_rate >= 0.0)) throw ContractError("learning rate must be non-negative");
  if (cfg.epochs < 1) throw ContractError("training needs at least one epoch");
  auto& params = model.params().all();
  TrainResult result;
  for (const auto& p : params) {
    if (is_trainable(p.group)) result.updated.push_back(p.name);
  }
  std::vector<Array> velocity;
  if (cfg.momentum != 0.0) {
    for (const auto& p : params) velocity.emplace_back(p.value.rows(), p.value.cols());
  }
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    LossAndGradient lg = loss_and_gradient(model, series);
    if (!std::isfinite(lg.loss)) throw DivergenceError(epoch, cfg.learning_rate);
    result.loss_history.push_back(lg.loss);
    if (validate) result.val_history.push_back(validate(model));

    double factor = 1.0;
    if (cfg.clip) {
      double sq = 0.0;
      for (const auto& g : lg.gradients)
        for (double v : g.flat()) sq += v * v;
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) throw DivergenceError(epoch, cfg.learning_rate);
      if (norm > cfg.clip_norm) factor = cfg.clip_norm / norm;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!is_trainable(params[i].group)) continue;
      auto value = params[i].value.flat();
      auto grad = lg.gradients[i].flat();
      if (cfg.momentum != 0.0) {
        auto vel = velocity[i].flat();
        for (std::size_t k = 0; k < value.size(); ++k) {
          vel[k] = cfg.momentum * vel[k] + factor * grad[k];
          value[k] -= cfg.learning_rate * vel[k];
        }
      } else {
        for (std::size_t k = 0; k < value.size(); ++k) {
          value[k] -= cfg.learning_rate * (factor * grad[k]);
        }
      }
    }
  }
  return result;
}

inline TrainResult train(ForecastModel& model, const AlignedSeries& series, const TrainConfig& cfg,
                         const AlignedSeries* validation = nullptr) {
  Validator v;
  if (validation != nullptr) v = [validation](const ForecastModel& m) { return loss_value(m, *validation); };
  return train(model, series, cfg, v);
}

struct GradCheckOptions {
  double epsilon{1e-4};
  double tolerance{1e-4};
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor{1e-6};
  // Restrict the check to these parameter names; nullopt checks everything.
  std::optional<std::vector<std::string>> only;
};

struct GradCheckReport {
  std::size_t checked{0};
  double max_relative_error{0.0};
  std::string worst;  // "name[r,c]" of the worst scalar
  double worst_analytic{0.0};
  double worst_numeric{0.0};
  bool passed{true};
};

// Central finite differences of the training loss against the analytic
// gradient, for every scalar of every selected parameter.
inline GradCheckReport grad_check(const ForecastModel& model, const AlignedSeries& series,
                                  const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  const LossAndGradient lg = loss_and_gradient(model, series);
  if (!std::isfinite(lg.loss)) throw DivergenceError(0, 0.0);
  ForecastModel probe = model;
  auto& params = probe.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (opts.only) {
      const auto& names = *opts.only;
      if (std::find(names.begin(), names.end(), params[i].name) == names.end()) continue;
    }
    Array& value = params[i].value;
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double saved = value[k];
      value[k] = saved + opts.epsilon;
      const double up = loss_value(probe, series);
      value[k] = saved - opts.epsilon;
      const double down = loss_value(probe, series);
      value[k] = saved;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      const double analytic = lg.gradients[i][k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (report.worst.empty() || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst = params[i].name + "[" + std::to_string(k / value.cols()) + "," +
                       std::to_string(k % value.cols()) + "]";
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error <= opts.tolerance;
  return report;
}

}  // namespace exarnn
