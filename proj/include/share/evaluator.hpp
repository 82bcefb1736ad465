#pragma once

// Binds an expression tree to trainable shape functions, evaluates it on
// batches, differentiates the batch MSE and runs the inner training loop.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "share/expr.hpp"
#include "share/shape_function.hpp"

namespace share {

struct ShapeSlot {
  Standardizer standardizer;
  ShapeBackend backend;
  // Observed range of the shape's raw argument on training data.
  std::optional<std::pair<double, double>> input_range;

  std::size_t n_params() const;
  std::span<double> params();
  std::span<const double> params() const;

  /// Standardize then apply the backend, in evaluation mode.
  Eigen::ArrayXd eval(const Eigen::ArrayXd& z) const;

  friend bool operator==(const ShapeSlot&, const ShapeSlot&) = default;
};

// One step of the flattened postorder program. Operand slots index earlier results.
struct Instruction {
  NodeKind kind = NodeKind::Variable;
  BinaryOp op = BinaryOp::Add;
  std::size_t var = 0;
  std::size_t shape = 0;
  std::size_t a = 0;
  std::size_t b = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct CompiledModel {
  ExprTree tree;
  std::vector<ShapeSlot> shapes;
  double div_epsilon = 1e-6;
  std::vector<Instruction> program;

  std::size_t n_params() const;
  friend bool operator==(const CompiledModel&, const CompiledModel&) = default;
};

struct CompileOptions {
  std::vector<std::size_t> layer_widths = default_layer_widths();
  bool standardize = true;
  double momentum = 0.1;
  double epsilon = 1e-5;
  double div_epsilon = 1e-6;
  // Skip the transparency check (fixed structures supplied by the caller).
  bool allow_nontransparent = false;
};

/// Flattens the tree to a postorder program. Called by compile and after deserialization.
std::vector<Instruction> build_program(const Node& root);

CompiledModel compile(const ExprTree& tree, std::uint64_t seed, const CompileOptions& opts = {});

enum class Mode { Train, Eval };

struct ShapeTape {
  Eigen::ArrayXd input;   // raw argument
  Eigen::ArrayXd xhat;    // standardized argument
  double batch_mean = 0.0;
  double batch_var = 0.0;  // biased
  double inv_std = 1.0;
  MlpShape::Cache cache;
};

struct ForwardTape {
  std::vector<Eigen::ArrayXd> values;  // one per instruction
  std::vector<ShapeTape> shapes;
};

/// Predictions for the rows of X (rows x n_vars). Pure: running statistics are not touched.
Eigen::ArrayXd forward(const CompiledModel& model, const Eigen::MatrixXd& X, Mode mode = Mode::Eval,
                       ForwardTape* tape = nullptr);

struct Gradients {
  double loss = 0.0;
  std::vector<std::vector<double>> per_shape;  // same layout as each shape's parameters
};

/// Batch MSE and its exact gradient with respect to every shape parameter.
Gradients backward(const CompiledModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   Mode mode = Mode::Train);

/// Moves running statistics toward the statistics of `X` (one training step's worth).
void update_running_stats(CompiledModel& model, const Eigen::MatrixXd& X);

struct TrainConfig {
  int max_epochs = 1000;
  std::vector<double> learning_rates{1e-3, 1e-2, 1e-1};
  double weight_decay = 1e-4;
  // 0 selects full batch up to 4096 rows, else 1024.
  std::size_t batch_size = 0;
  int early_stop_patience = 50;
  double trial_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainResult {
  CompiledModel model;
  double val_mse = 0.0;
  double val_r2 = 0.0;
  double learning_rate = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> val_mse_history;
};

TrainResult train(const CompiledModel& model, const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
                  const Eigen::MatrixXd& X_val, const Eigen::VectorXd& y_val, const TrainConfig& cfg);

/// Records each shape's argument range over X into the model.
void record_input_ranges(CompiledModel& model, const Eigen::MatrixXd& X);

double mse(const Eigen::VectorXd& y, const Eigen::ArrayXd& y_hat);
double r2_score(const Eigen::VectorXd& y, const Eigen::ArrayXd& y_hat);

}  // namespace share
