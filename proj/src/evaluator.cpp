#include "share/evaluator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "share/error.hpp"

namespace share {

std::size_t ShapeSlot::n_params() const {
  if (const auto* mlp = std::get_if<MlpShape>(&backend)) return mlp->n_params();
  return 0;
}

std::span<double> ShapeSlot::params() {
  if (auto* mlp = std::get_if<MlpShape>(&backend)) return mlp->params();
  return {};
}

std::span<const double> ShapeSlot::params() const {
  if (const auto* mlp = std::get_if<MlpShape>(&backend)) return mlp->params();
  return {};
}

namespace {

Eigen::ArrayXd apply_backend(const ShapeBackend& backend, const Eigen::ArrayXd& xhat, MlpShape::Cache* cache) {
  if (const auto* mlp = std::get_if<MlpShape>(&backend)) return mlp->forward(xhat, cache);
  const auto& pwl = std::get<PiecewiseLinearShape>(backend);
  Eigen::ArrayXd out(xhat.size());
  for (Eigen::Index i = 0; i < xhat.size(); ++i) out[i] = pwl.value(xhat[i]);
  return out;
}

Eigen::ArrayXd standardize_eval(const Standardizer& st, const Eigen::ArrayXd& z) {
  if (!st.enabled) return z;
  return (z - st.running_mean) / std::sqrt(st.running_var + st.epsilon);
}

double protect(double d, double eps) {
  const double mag = std::max(std::fabs(d), eps);
  return d >= 0.0 ? mag : -mag;
}

std::size_t emit(const Node& node, std::vector<Instruction>& prog) {
  Instruction ins;
  ins.kind = node.kind;
  switch (node.kind) {
    case NodeKind::Variable:
      ins.var = node.var;
      break;
    case NodeKind::Binary:
      ins.op = node.op;
      ins.a = emit(node.children[0], prog);
      ins.b = emit(node.children[1], prog);
      break;
    case NodeKind::Shape:
      ins.shape = node.shape_id;
      ins.a = emit(node.children[0], prog);
      break;
    case NodeKind::Constant:
      throw Error(ErrorCode::ValidationFailed, "constants are not allowed in a trainable expression");
    case NodeKind::Function:
      throw Error(ErrorCode::ValidationFailed,
                  fmt::format("function '{}' is not allowed in a trainable expression", node.func));
  }
  prog.push_back(ins);
  return prog.size() - 1;
}

}  // namespace

Eigen::ArrayXd ShapeSlot::eval(const Eigen::ArrayXd& z) const {
  return apply_backend(backend, standardize_eval(standardizer, z), nullptr);
}

std::size_t CompiledModel::n_params() const {
  std::size_t n = 0;
  for (const ShapeSlot& s : shapes) n += s.n_params();
  return n;
}

std::vector<Instruction> build_program(const Node& root) {
  std::vector<Instruction> prog;
  emit(root, prog);
  return prog;
}

CompiledModel compile(const ExprTree& tree, std::uint64_t seed, const CompileOptions& opts) {
  if (!opts.allow_nontransparent) {
    const TransparencyVerdict verdict = validate_transparent(tree);
    if (!verdict.is_transparent) {
      std::string msg = "expression is not transparent:";
      for (const Violation& v : verdict.violations) msg += " " + describe(v, tree);
      throw Error(ErrorCode::ValidationFailed, msg);
    }
  }
  CompiledModel model;
  model.tree = tree;
  model.div_epsilon = opts.div_epsilon;
  model.program = build_program(tree.root);

  const std::size_t n_shapes = count_shapes(tree.root);
  std::vector<bool> seen(n_shapes, false);
  for (const Node* n : preorder(tree.root)) {
    if (n->kind != NodeKind::Shape) continue;
    if (n->shape_id >= n_shapes || seen[n->shape_id]) {
      throw Error(ErrorCode::ValidationFailed, "shape ids must be distinct and contiguous from 0");
    }
    seen[n->shape_id] = true;
  }
  std::mt19937_64 rng(seed);
  model.shapes.reserve(n_shapes);
  for (std::size_t k = 0; k < n_shapes; ++k) {
    ShapeSlot slot;
    slot.standardizer.enabled = opts.standardize;
    slot.standardizer.momentum = opts.momentum;
    slot.standardizer.epsilon = opts.epsilon;
    slot.backend = MlpShape::random(opts.layer_widths, rng);
    model.shapes.push_back(std::move(slot));
  }
  return model;
}

Eigen::ArrayXd forward(const CompiledModel& model, const Eigen::MatrixXd& X, Mode mode, ForwardTape* tape) {
  const Eigen::Index n = X.rows();
  ForwardTape local;
  ForwardTape& t = tape ? *tape : local;
  t.values.assign(model.program.size(), Eigen::ArrayXd());
  t.shapes.assign(model.shapes.size(), ShapeTape());
  for (std::size_t i = 0; i < model.program.size(); ++i) {
    const Instruction& ins = model.program[i];
    Eigen::ArrayXd& out = t.values[i];
    switch (ins.kind) {
      case NodeKind::Variable:
        if (ins.var >= static_cast<std::size_t>(X.cols())) {
          throw Error(ErrorCode::SchemaError,
                      fmt::format("expression uses variable {} but data has {} columns", ins.var + 1, X.cols()));
        }
        out = X.col(static_cast<Eigen::Index>(ins.var)).array();
        break;
      case NodeKind::Binary: {
        const Eigen::ArrayXd& a = t.values[ins.a];
        const Eigen::ArrayXd& b = t.values[ins.b];
        switch (ins.op) {
          case BinaryOp::Add: out = a + b; break;
          case BinaryOp::Sub: out = a - b; break;
          case BinaryOp::Mul: out = a * b; break;
          case BinaryOp::Div:
            out.resize(n);
            for (Eigen::Index r = 0; r < n; ++r) out[r] = a[r] / protect(b[r], model.div_epsilon);
            break;
        }
        break;
      }
      case NodeKind::Shape: {
        const ShapeSlot& slot = model.shapes[ins.shape];
        ShapeTape& st = t.shapes[ins.shape];
        st.input = t.values[ins.a];
        if (!slot.standardizer.enabled) {
          st.xhat = st.input;
        } else if (mode == Mode::Train) {
          st.batch_mean = st.input.mean();
          st.batch_var = (st.input - st.batch_mean).square().mean();
          st.inv_std = 1.0 / std::sqrt(st.batch_var + slot.standardizer.epsilon);
          st.xhat = (st.input - st.batch_mean) * st.inv_std;
        } else {
          st.inv_std = 1.0 / std::sqrt(slot.standardizer.running_var + slot.standardizer.epsilon);
          st.xhat = standardize_eval(slot.standardizer, st.input);
        }
        out = apply_backend(slot.backend, st.xhat, tape ? &st.cache : nullptr);
        break;
      }
      default:
        throw Error(ErrorCode::ValidationFailed, "unsupported instruction");
    }
  }
  Eigen::ArrayXd pred = t.values.back();
  if (!pred.allFinite()) throw Error(ErrorCode::NonFiniteOutput, "prediction is NaN or infinite");
  return pred;
}

namespace {

Gradients loss_and_grad(const CompiledModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Mode mode,
                        ForwardTape& tape) {
  if (y.size() != X.rows() || X.rows() == 0) {
    throw Error(ErrorCode::InvalidArgument, "X and y must be non-empty with matching rows");
  }
  const Eigen::ArrayXd pred = forward(model, X, mode, &tape);
  const double n = static_cast<double>(X.rows());
  const Eigen::ArrayXd diff = pred - y.array();

  Gradients g;
  g.loss = diff.square().mean();
  g.per_shape.resize(model.shapes.size());
  for (std::size_t k = 0; k < model.shapes.size(); ++k) g.per_shape[k].assign(model.shapes[k].n_params(), 0.0);

  std::vector<Eigen::ArrayXd> adj(model.program.size());
  adj.back() = 2.0 * diff / n;
  auto accumulate = [&](std::size_t slot, const Eigen::ArrayXd& v) {
    if (adj[slot].size() == 0) {
      adj[slot] = v;
    } else {
      adj[slot] += v;
    }
  };
  for (std::size_t i = model.program.size(); i-- > 0;) {
    const Instruction& ins = model.program[i];
    if (adj[i].size() == 0) continue;
    const Eigen::ArrayXd& g_out = adj[i];
    switch (ins.kind) {
      case NodeKind::Variable:
        break;
      case NodeKind::Binary: {
        const Eigen::ArrayXd& a = tape.values[ins.a];
        const Eigen::ArrayXd& b = tape.values[ins.b];
        switch (ins.op) {
          case BinaryOp::Add:
            accumulate(ins.a, g_out);
            accumulate(ins.b, g_out);
            break;
          case BinaryOp::Sub:
            accumulate(ins.a, g_out);
            accumulate(ins.b, -g_out);
            break;
          case BinaryOp::Mul:
            accumulate(ins.a, g_out * b);
            accumulate(ins.b, g_out * a);
            break;
          case BinaryOp::Div: {
            Eigen::ArrayXd ga(a.size());
            Eigen::ArrayXd gb(a.size());
            for (Eigen::Index r = 0; r < a.size(); ++r) {
              const double d = protect(b[r], model.div_epsilon);
              ga[r] = g_out[r] / d;
              // Inside the guard the denominator is constant.
              gb[r] = std::fabs(b[r]) >= model.div_epsilon ? -g_out[r] * a[r] / (d * d) : 0.0;
            }
            accumulate(ins.a, ga);
            accumulate(ins.b, gb);
            break;
          }
        }
        break;
      }
      case NodeKind::Shape: {
        const ShapeSlot& slot = model.shapes[ins.shape];
        const ShapeTape& st = tape.shapes[ins.shape];
        Eigen::ArrayXd dxhat;
        if (const auto* mlp = std::get_if<MlpShape>(&slot.backend)) {
          dxhat = mlp->backward(st.cache, g_out, g.per_shape[ins.shape]);
        } else {
          const auto& pwl = std::get<PiecewiseLinearShape>(slot.backend);
          dxhat.resize(g_out.size());
          for (Eigen::Index r = 0; r < g_out.size(); ++r) dxhat[r] = g_out[r] * pwl.slope(st.xhat[r]);
        }
        if (!slot.standardizer.enabled) {
          accumulate(ins.a, dxhat);
        } else if (mode == Mode::Train) {
          const double mean_d = dxhat.mean();
          const double mean_dx = (dxhat * st.xhat).mean();
          accumulate(ins.a, st.inv_std * (dxhat - mean_d - st.xhat * mean_dx));
        } else {
          accumulate(ins.a, dxhat * st.inv_std);
        }
        break;
      }
      default:
        break;
    }
  }
  for (const auto& gs : g.per_shape) {
    for (double v : gs) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteGradient, "gradient is NaN or infinite");
    }
  }
  return g;
}

void update_stats_from_tape(CompiledModel& model, const ForwardTape& tape) {
  for (std::size_t k = 0; k < model.shapes.size(); ++k) {
    Standardizer& st = model.shapes[k].standardizer;
    if (!st.enabled) continue;
    const ShapeTape& s = tape.shapes[k];
    const double n = static_cast<double>(s.input.size());
    const double unbiased = n > 1.0 ? s.batch_var * n / (n - 1.0) : s.batch_var;
    st.update(s.batch_mean, unbiased);
  }
}

}  // namespace

Gradients backward(const CompiledModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Mode mode) {
  ForwardTape tape;
  return loss_and_grad(model, X, y, mode, tape);
}

void update_running_stats(CompiledModel& model, const Eigen::MatrixXd& X) {
  ForwardTape tape;
  forward(model, X, Mode::Train, &tape);
  update_stats_from_tape(model, tape);
}

void record_input_ranges(CompiledModel& model, const Eigen::MatrixXd& X) {
  if (model.shapes.empty()) return;
  ForwardTape tape;
  forward(model, X, Mode::Eval, &tape);
  for (std::size_t k = 0; k < model.shapes.size(); ++k) {
    const Eigen::ArrayXd& z = tape.shapes[k].input;
    model.shapes[k].input_range = std::make_pair(z.minCoeff(), z.maxCoeff());
  }
}

double mse(const Eigen::VectorXd& y, const Eigen::ArrayXd& y_hat) {
  if (y.size() != y_hat.size() || y.size() == 0) {
    throw Error(ErrorCode::InvalidArgument, "mse needs equal-length non-empty inputs");
  }
  return (y.array() - y_hat).square().mean();
}

double r2_score(const Eigen::VectorXd& y, const Eigen::ArrayXd& y_hat) {
  if (y.size() != y_hat.size() || y.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "r2 needs two or more paired values");
  }
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot == 0.0) throw Error(ErrorCode::DegenerateTarget, "target has zero variance");
  const double ss_res = (y.array() - y_hat).square().sum();
  return 1.0 - ss_res / ss_tot;
}

namespace {

class Adam {
 public:
  Adam(const CompiledModel& model, double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {
    for (const ShapeSlot& s : model.shapes) {
      m_.emplace_back(s.n_params(), 0.0);
      v_.emplace_back(s.n_params(), 0.0);
    }
  }

  void step(CompiledModel& model, const Gradients& g) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    const double step_size = lr_ / bc1;
    const double bc2_sqrt = std::sqrt(bc2);
    for (std::size_t k = 0; k < model.shapes.size(); ++k) {
      std::span<double> p = model.shapes[k].params();
      const std::vector<double>& gk = g.per_shape[k];
      std::vector<double>& m = m_[k];
      std::vector<double>& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double grad = gk[i] + wd_ * p[i];
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad * grad;
        const double denom = std::sqrt(v[i]) / bc2_sqrt + kEps;
        p[i] -= step_size * m[i] / denom;
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  double wd_;
  int t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

bool params_finite(const CompiledModel& model) {
  for (const ShapeSlot& s : model.shapes) {
    for (double p : s.params()) {
      if (!std::isfinite(p)) return false;
    }
  }
  return true;
}

struct LoopResult {
  CompiledModel best;
  double best_mse = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> history;
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx, std::size_t begin,
                            std::size_t end) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(end - begin), X.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = X.row(idx[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx, std::size_t begin,
                       std::size_t end) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) out[static_cast<Eigen::Index>(i - begin)] = y[idx[i]];
  return out;
}

LoopResult run_loop(const CompiledModel& init, const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
                    const Eigen::MatrixXd& X_val, const Eigen::VectorXd& y_val, const TrainConfig& cfg, double lr,
                    int epochs) {
  CompiledModel model = init;
  Adam adam(model, lr, cfg.weight_decay);
  const std::size_t n = static_cast<std::size_t>(X_train.rows());
  std::size_t batch = cfg.batch_size;
  if (batch == 0) batch = n <= 4096 ? n : 1024;
  const bool full_batch = batch >= n;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  LoopResult res;
  res.best = model;
  ForwardTape tape;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    try {
      if (full_batch) {
        const Gradients g = loss_and_grad(model, X_train, y_train, Mode::Train, tape);
        if (!std::isfinite(g.loss)) throw Error(ErrorCode::TrainingDiverged, "non-finite training loss");
        update_stats_from_tape(model, tape);
        adam.step(model, g);
      } else {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < n; begin += batch) {
          const std::size_t end = std::min(n, begin + batch);
          // A one-row batch has no spread to standardize with.
          if (end - begin < 2) continue;
          const Eigen::MatrixXd Xb = gather_rows(X_train, order, begin, end);
          const Eigen::VectorXd yb = gather(y_train, order, begin, end);
          const Gradients g = loss_and_grad(model, Xb, yb, Mode::Train, tape);
          if (!std::isfinite(g.loss)) throw Error(ErrorCode::TrainingDiverged, "non-finite training loss");
          update_stats_from_tape(model, tape);
          adam.step(model, g);
        }
      }
      if (!params_finite(model)) throw Error(ErrorCode::TrainingDiverged, "parameters became non-finite");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::TrainingDiverged) throw;
      throw Error(ErrorCode::TrainingDiverged, fmt::format("epoch {}: {}", epoch, e.what()));
    }
    double val;
    try {
      val = mse(y_val, forward(model, X_val, Mode::Eval));
    } catch (const Error& e) {
      throw Error(ErrorCode::TrainingDiverged, fmt::format("epoch {}: {}", epoch, e.what()));
    }
    if (!std::isfinite(val)) throw Error(ErrorCode::TrainingDiverged, "non-finite validation loss");
    res.history.push_back(val);
    res.epochs_run = epoch;
    if (val < res.best_mse) {
      res.best_mse = val;
      res.best_epoch = epoch;
      res.best = model;
    } else if (epoch - res.best_epoch >= cfg.early_stop_patience) {
      break;
    }
  }
  return res;
}

}  // namespace

TrainResult train(const CompiledModel& model, const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
                  const Eigen::MatrixXd& X_val, const Eigen::VectorXd& y_val, const TrainConfig& cfg) {
  if (X_train.rows() == 0 || X_val.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty dataset split");
  if (X_train.rows() != y_train.size() || X_val.rows() != y_val.size()) {
    throw Error(ErrorCode::InvalidArgument, "feature and target row counts differ");
  }
  if (cfg.learning_rates.empty()) throw Error(ErrorCode::ConfigError, "learning_rates must not be empty");
  if (cfg.max_epochs <= 0 || cfg.early_stop_patience <= 0) {
    throw Error(ErrorCode::ConfigError, "max_epochs and early_stop_patience must be positive");
  }
  if (cfg.weight_decay < 0.0) throw Error(ErrorCode::ConfigError, "weight_decay must be non-negative");
  if (y_val.size() < 2 || (y_val.array() - y_val.mean()).square().sum() == 0.0) {
    throw Error(ErrorCode::DegenerateTarget, "validation target has zero variance");
  }

  TrainResult out;
  if (model.n_params() == 0) {
    out.model = model;
    const Eigen::ArrayXd pred = forward(out.model, X_val, Mode::Eval);
    out.val_mse = mse(y_val, pred);
    out.val_r2 = r2_score(y_val, pred);
    record_input_ranges(out.model, X_train);
    return out;
  }

  double lr = cfg.learning_rates.front();
  if (cfg.learning_rates.size() > 1) {
    const int trial_epochs = std::max(1, static_cast<int>(std::lround(cfg.max_epochs * cfg.trial_fraction)));
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    for (double candidate : cfg.learning_rates) {
      double score = std::numeric_limits<double>::infinity();
      try {
        score = run_loop(model, X_train, y_train, X_val, y_val, cfg, candidate, trial_epochs).best_mse;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TrainingDiverged) throw;
      }
      if (score < best) {
        best = score;
        lr = candidate;
        any = true;
      }
    }
    if (!any) throw Error(ErrorCode::TrainingDiverged, "every learning rate diverged in trial runs");
  }

  LoopResult res = run_loop(model, X_train, y_train, X_val, y_val, cfg, lr, cfg.max_epochs);
  out.model = std::move(res.best);
  out.val_mse = res.best_mse;
  const Eigen::ArrayXd pred = forward(out.model, X_val, Mode::Eval);
  out.val_r2 = r2_score(y_val, pred);
  out.learning_rate = lr;
  out.epochs_run = res.epochs_run;
  out.best_epoch = res.best_epoch;
  out.val_mse_history = std::move(res.history);
  record_input_ranges(out.model, X_train);
  return out;
}

}  // namespace share
