#pragma once

// Univariate shape functions: a small ELU network (the trainable backend)
// and a fixed piecewise-linear curve (used to hard-wire known functions).

#include <Eigen/Core>

#include <cstddef>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace share {

// Feature-major activations: one contiguous row per unit, one column per sample.
using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline const std::vector<std::size_t>& default_layer_widths() {
  static const std::vector<std::size_t> widths{1, 10, 10, 10, 10, 10, 1};
  return widths;
}

/// Input normalization applied before a shape's network. Training mode uses
/// batch statistics; evaluation mode uses the running estimates.
struct Standardizer {
  bool enabled = true;
  double running_mean = 0.0;
  double running_var = 1.0;
  double momentum = 0.1;
  double epsilon = 1e-5;
  // Running statistics are seeded from the first training batch.
  bool initialized = false;

  void update(double batch_mean, double batch_unbiased_var);
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

class MlpShape {
 public:
  struct Cache {
    // acts[0] is the (standardized) input; acts[l + 1] is the output of layer l.
    std::vector<RowArray> acts;
  };

  MlpShape() = default;
  explicit MlpShape(std::vector<std::size_t> widths);

  /// Weights and biases uniform in [-a, a], a = sqrt(1 / fan_in).
  static MlpShape random(std::vector<std::size_t> widths, std::mt19937_64& rng);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t n_layers() const { return widths_.empty() ? 0 : widths_.size() - 1; }
  std::size_t n_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + widths_[layer] * widths_[layer + 1];
  }

  Eigen::ArrayXd forward(const Eigen::ArrayXd& x, Cache* cache) const;

  /// Adds d(loss)/d(params) into `grad` and returns d(loss)/d(x).
  Eigen::ArrayXd backward(const Cache& cache, const Eigen::ArrayXd& dout, std::span<double> grad) const;

  friend bool operator==(const MlpShape&, const MlpShape&) = default;

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Linear interpolation through fixed knots, extended linearly past the ends.
struct PiecewiseLinearShape {
  std::vector<double> xs;
  std::vector<double> ys;

  double value(double x) const;
  double slope(double x) const;

  friend bool operator==(const PiecewiseLinearShape&, const PiecewiseLinearShape&) = default;
};

using ShapeBackend = std::variant<MlpShape, PiecewiseLinearShape>;

}  // namespace share
