#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "indirect/errors.hpp"

namespace indirect {

struct AdamHyperparameters {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments for one parameter block.
class AdamState {
 public:
  AdamState(Eigen::Index rows, Eigen::Index cols, AdamHyperparameters hyper = {})
      : hyper_(hyper),
        first_moment_(Eigen::MatrixXd::Zero(rows, cols)),
        second_moment_(Eigen::MatrixXd::Zero(rows, cols)) {
    if (!(hyper.lr > 0) || !(hyper.beta1 > 0 && hyper.beta1 < 1) || !(hyper.beta2 > 0 && hyper.beta2 < 1) ||
        !(hyper.eps > 0)) {
      throw ConfigError("invalid Adam hyperparameters");
    }
  }

  /// One bias-corrected Adam update of `params` in place.
  void step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grads) {
    if (params.rows() != first_moment_.rows() || params.cols() != first_moment_.cols() ||
        grads.rows() != params.rows() || grads.cols() != params.cols()) {
      throw ConfigError("Adam: parameter/gradient shape mismatch");
    }
    for (Eigen::Index j = 0; j < grads.cols(); ++j) {
      for (Eigen::Index i = 0; i < grads.rows(); ++i) {
        if (!std::isfinite(grads(i, j))) {
          throw NumericalError("Adam: non-finite gradient at (" + std::to_string(i) + ", " + std::to_string(j) +
                               ") on step " + std::to_string(step_ + 1));
        }
      }
    }
    ++step_;
    first_moment_ = hyper_.beta1 * first_moment_ + (1.0 - hyper_.beta1) * grads;
    second_moment_ = hyper_.beta2 * second_moment_ + (1.0 - hyper_.beta2) * grads.cwiseProduct(grads);
    const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    params.array() -= hyper_.lr * (first_moment_.array() / c1) /
                      ((second_moment_.array() / c2).sqrt() + hyper_.eps);
  }

  long step_count() const { return step_; }
  const Eigen::MatrixXd& first_moment() const { return first_moment_; }
  const Eigen::MatrixXd& second_moment() const { return second_moment_; }
  const AdamHyperparameters& hyperparameters() const { return hyper_; }

 private:
  AdamHyperparameters hyper_;
  Eigen::MatrixXd first_moment_;
  Eigen::MatrixXd second_moment_;
  long step_ = 0;
};

/// Stops after `patience` consecutive checks without a strict improvement.
class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(long patience) : patience_(patience) {
    if (patience <= 0) throw ConfigError("early stopping patience must be positive");
  }

  /// Records `loss`; returns true when training should stop.
  bool check(double loss) {
    if (std::isnan(loss)) throw NumericalError("loss is NaN");
    if (loss < best_loss_) {
      best_loss_ = loss;
      since_improvement_ = 0;
    } else {
      ++since_improvement_;
    }
    return since_improvement_ >= patience_;
  }

  long patience() const { return patience_; }
  double best_loss() const { return best_loss_; }
  long iterations_since_improvement() const { return since_improvement_; }

 private:
  long patience_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  long since_improvement_ = 0;
};

struct TrainingOptions {
  AdamHyperparameters adam;
  long patience = 100;
  long max_iterations = 100'000;
};

struct TrainingOutcome {
  std::vector<Eigen::MatrixXd> best_params;
  double best_loss = std::numeric_limits<double>::infinity();
  long best_iteration = 0;
  long iterations = 0;
  LossTrace trace;
};

/// Full-batch Adam over several parameter blocks with early stopping.
///
/// `objective(params, grads)` returns the loss at `params` and fills `grads`
/// (same shapes). `after_step(params)` runs after every update, e.g. to
/// project parameters back onto a constraint set. Iteration k evaluates the
/// loss at the current parameters, records it, and then takes a step; the
/// parameters with the lowest recorded loss are returned.
template <typename Objective, typename AfterStep>
TrainingOutcome minimize_adam(std::vector<Eigen::MatrixXd> params, Objective&& objective,
                              const TrainingOptions& options, AfterStep&& after_step) {
  if (options.max_iterations <= 0) throw ConfigError("max_iterations must be positive");
  std::vector<AdamState> states;
  std::vector<Eigen::MatrixXd> grads;
  for (const auto& p : params) {
    states.emplace_back(p.rows(), p.cols(), options.adam);
    grads.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  }

  TrainingOutcome out;
  EarlyStopMonitor monitor(options.patience);
  for (long it = 0; it < options.max_iterations; ++it) {
    const double loss = objective(static_cast<const std::vector<Eigen::MatrixXd>&>(params), grads);
    if (std::isnan(loss)) {
      throw DivergenceError("training diverged at iteration " + std::to_string(it), std::move(out.trace));
    }
    out.trace.emplace_back(it, loss);
    out.iterations = it + 1;
    if (loss < out.best_loss) {
      out.best_loss = loss;
      out.best_iteration = it;
      out.best_params = params;
    }
    if (monitor.check(loss)) break;
    for (std::size_t b = 0; b < params.size(); ++b) states[b].step(params[b], grads[b]);
    after_step(params);
  }
  return out;
}

template <typename Objective>
TrainingOutcome minimize_adam(std::vector<Eigen::MatrixXd> params, Objective&& objective,
                              const TrainingOptions& options) {
  return minimize_adam(std::move(params), std::forward<Objective>(objective), options,
                       [](std::vector<Eigen::MatrixXd>&) {});
}

}  // namespace indirect
