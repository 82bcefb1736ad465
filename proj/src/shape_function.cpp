#include "share/shape_function.hpp"

#include <algorithm>
#include <cmath>

#include "share/error.hpp"

namespace share {

void Standardizer::update(double batch_mean, double batch_unbiased_var) {
  if (!initialized) {
    running_mean = batch_mean;
    running_var = batch_unbiased_var;
    initialized = true;
    return;
  }
  running_mean = (1.0 - momentum) * running_mean + momentum * batch_mean;
  running_var = (1.0 - momentum) * running_var + momentum * batch_unbiased_var;
}

MlpShape::MlpShape(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2 || widths_.front() != 1 || widths_.back() != 1) {
    throw Error(ErrorCode::InvalidArgument, "shape network must map one input to one output");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] == 0 || widths_[l + 1] == 0) {
      throw Error(ErrorCode::InvalidArgument, "layer widths must be positive");
    }
    offsets_.push_back(total);
    total += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
  params_.assign(total, 0.0);
}

MlpShape MlpShape::random(std::vector<std::size_t> widths, std::mt19937_64& rng) {
  MlpShape net(std::move(widths));
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const double a = std::sqrt(1.0 / static_cast<double>(net.widths_[l]));
    std::uniform_real_distribution<double> dist(-a, a);
    const std::size_t end = l + 1 < net.n_layers() ? net.offsets_[l + 1] : net.params_.size();
    for (std::size_t i = net.offsets_[l]; i < end; ++i) net.params_[i] = dist(rng);
  }
  return net;
}

namespace {

void elu_inplace(RowArray& a) {
  double* p = a.data();
  const Eigen::Index n = a.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p[i] <= 0.0) p[i] = std::expm1(p[i]);
  }
}

}  // namespace

Eigen::ArrayXd MlpShape::forward(const Eigen::ArrayXd& x, Cache* cache) const {
  const Eigen::Index n = x.size();
  RowArray in(1, n);
  in.row(0) = x.transpose();
  std::vector<RowArray> local;
  std::vector<RowArray>& acts = cache ? cache->acts : local;
  acts.clear();
  acts.reserve(n_layers() + 1);
  acts.push_back(std::move(in));
  for (std::size_t l = 0; l < n_layers(); ++l) {
    const std::size_t fan_in = widths_[l];
    const std::size_t fan_out = widths_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    const RowArray& prev = acts.back();
    RowArray out(static_cast<Eigen::Index>(fan_out), n);
    for (std::size_t j = 0; j < fan_out; ++j) {
      auto row = out.row(static_cast<Eigen::Index>(j));
      row.setConstant(b[j]);
      for (std::size_t k = 0; k < fan_in; ++k) {
        row += w[j * fan_in + k] * prev.row(static_cast<Eigen::Index>(k));
      }
    }
    if (l + 1 < n_layers()) elu_inplace(out);
    acts.push_back(std::move(out));
  }
  Eigen::ArrayXd y = acts.back().row(0).transpose();
  if (!cache) acts.clear();
  return y;
}

Eigen::ArrayXd MlpShape::backward(const Cache& cache, const Eigen::ArrayXd& dout,
                                  std::span<double> grad) const {
  const Eigen::Index n = dout.size();
  RowArray delta(1, n);
  delta.row(0) = dout.transpose();
  for (std::size_t l = n_layers(); l-- > 0;) {
    const std::size_t fan_in = widths_[l];
    const std::size_t fan_out = widths_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    const RowArray& in = cache.acts[l];
    for (std::size_t j = 0; j < fan_out; ++j) {
      const auto drow = delta.row(static_cast<Eigen::Index>(j));
      gb[j] += drow.sum();
      for (std::size_t k = 0; k < fan_in; ++k) {
        gw[j * fan_in + k] += (drow * in.row(static_cast<Eigen::Index>(k))).sum();
      }
    }
    RowArray din = RowArray::Zero(static_cast<Eigen::Index>(fan_in), n);
    for (std::size_t k = 0; k < fan_in; ++k) {
      auto row = din.row(static_cast<Eigen::Index>(k));
      for (std::size_t j = 0; j < fan_out; ++j) {
        row += w[j * fan_in + k] * delta.row(static_cast<Eigen::Index>(j));
      }
    }
    if (l > 0) {
      // ELU'(z) = 1 for z > 0, else elu(z) + 1.
      din = (in > 0.0).select(din, din * (in + 1.0));
    }
    delta = std::move(din);
  }
  return delta.row(0).transpose();
}

double PiecewiseLinearShape::value(double x) const {
  if (xs.size() < 2) throw Error(ErrorCode::InvalidArgument, "piecewise-linear shape needs 2 knots");
  std::size_t i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  i = std::clamp<std::size_t>(i, 1, xs.size() - 1);
  const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

double PiecewiseLinearShape::slope(double x) const {
  if (xs.size() < 2) throw Error(ErrorCode::InvalidArgument, "piecewise-linear shape needs 2 knots");
  std::size_t i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  i = std::clamp<std::size_t>(i, 1, xs.size() - 1);
  return (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
}

}  // namespace share
