#pragma once

// Central finite differences against the analytic batch-MSE gradient.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>

#include "share/evaluator.hpp"
#include "share/gp.hpp"

namespace share::testing {

struct GradCheck {
  double rel_error = 0.0;
  std::size_t n_params = 0;
};

inline double train_loss(const CompiledModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return mse(y, forward(m, X, Mode::Train));
}

// ||analytic - numeric|| / max(||analytic||, ||numeric||) over every parameter.
inline GradCheck check_gradient(CompiledModel model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double step = 1e-5) {
  const Gradients g = backward(model, X, y, Mode::Train);
  double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
  GradCheck out;
  for (std::size_t s = 0; s < model.shapes.size(); ++s) {
    auto p = model.shapes[s].params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + step;
      const double up = train_loss(model, X, y);
      p[i] = keep - step;
      const double down = train_loss(model, X, y);
      p[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = g.per_shape[s][i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      f2 += numeric * numeric;
      ++out.n_params;
    }
  }
  const double scale = std::max(std::sqrt(a2), std::sqrt(f2));
  out.rel_error = scale > 0.0 ? std::sqrt(diff2) / scale : 0.0;
  return out;
}

// Smallest |denominator| seen by any division in a training-mode pass.
inline double min_abs_denominator(const CompiledModel& m, const Eigen::MatrixXd& X) {
  ForwardTape tape;
  forward(m, X, Mode::Train, &tape);
  double lo = INFINITY;
  for (const Instruction& ins : m.program) {
    if (ins.kind == NodeKind::Binary && ins.op == BinaryOp::Div) lo = std::min(lo, tape.values[ins.b].abs().minCoeff());
  }
  return lo;
}

struct GradCase {
  CompiledModel model;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

// Random transparent model with 1..3 shapes over at most 4 variables, kept clear of the division guard.
inline GradCase random_grad_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> n_vars_dist(1, 4);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (;;) {
    const std::size_t n = n_vars_dist(rng);
    const ExprTree tree = random_grow(rng, n, 5);
    const std::size_t shapes = count_shapes(tree.root);
    if (shapes == 0 || shapes > 3) continue;
    const std::size_t rows = 16;
    Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(n));
    Eigen::VectorXd y(rows);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = u(rng) * (rng() % 2 ? 1.0 : -1.0);
      y[i] = u(rng);
    }
    CompiledModel model = compile(tree, rng());
    if (min_abs_denominator(model, X) < 1e-2) continue;
    return {std::move(model), std::move(X), std::move(y)};
  }
}

}  // namespace share::testing
