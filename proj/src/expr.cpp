#include "share/expr.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "share/error.hpp"

namespace share {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::UnknownEquation: return "UnknownEquation";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::NonFiniteOutput: return "NonFiniteOutput";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::PatternMismatch: return "PatternMismatch";
    case ErrorCode::UnknownShape: return "UnknownShape";
    case ErrorCode::NoSegments: return "NoSegments";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

ParseError::ParseError(const std::string& message, std::size_t line, std::size_t column)
    : Error(ErrorCode::ParseError,
            line > 0 ? fmt::format("line {}, column {}: {}", line, column, message)
                     : fmt::format("column {}: {}", column, message)),
      line_(line),
      column_(column) {}

const char* op_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
  }
  return "?";
}

bool is_commutative(BinaryOp op) { return op == BinaryOp::Add || op == BinaryOp::Mul; }

Node Node::variable(std::size_t index) {
  Node n;
  n.kind = NodeKind::Variable;
  n.var = index;
  return n;
}

Node Node::constant(double v) {
  Node n;
  n.kind = NodeKind::Constant;
  n.value = v;
  return n;
}

Node Node::binary(BinaryOp op, Node lhs, Node rhs) {
  Node n;
  n.kind = NodeKind::Binary;
  n.op = op;
  n.children.reserve(2);
  n.children.push_back(std::move(lhs));
  n.children.push_back(std::move(rhs));
  return n;
}

Node Node::shape(std::size_t id, Node arg) {
  Node n;
  n.kind = NodeKind::Shape;
  n.shape_id = id;
  n.children.push_back(std::move(arg));
  return n;
}

Node Node::function(std::string name, std::vector<Node> args) {
  Node n;
  n.kind = NodeKind::Function;
  n.func = std::move(name);
  n.children = std::move(args);
  return n;
}

std::string ExprTree::var_name(std::size_t index) const {
  if (index < var_names.size()) return var_names[index];
  return fmt::format("x{}", index + 1);
}

namespace {

void collect_vars(const Node& node, VarSet& out) {
  if (node.kind == NodeKind::Variable) out.insert(node.var);
  for (const Node& c : node.children) collect_vars(c, out);
}

void count_vars(const Node& node, std::map<std::size_t, std::size_t>& counts) {
  if (node.kind == NodeKind::Variable) ++counts[node.var];
  for (const Node& c : node.children) count_vars(c, counts);
}

std::string child_path(const std::string& parent, std::size_t i) {
  return parent.empty() ? std::to_string(i) : parent + "." + std::to_string(i);
}

}  // namespace

VarSet active_vars(const Node& node) {
  VarSet out;
  collect_vars(node, out);
  return out;
}

StructuralMetrics structural_metrics(const Node& node) {
  StructuralMetrics m;
  m.size = 1;
  switch (node.kind) {
    case NodeKind::Variable:
    case NodeKind::Constant: m.n_leaves = 1; break;
    case NodeKind::Binary: m.n_binary_ops = 1; break;
    case NodeKind::Shape: m.n_shapes = 1; break;
    case NodeKind::Function: break;
  }
  std::size_t child_depth = 0;
  for (const Node& c : node.children) {
    const StructuralMetrics cm = structural_metrics(c);
    m.size += cm.size;
    m.n_shapes += cm.n_shapes;
    m.n_binary_ops += cm.n_binary_ops;
    m.n_leaves += cm.n_leaves;
    child_depth = std::max(child_depth, cm.depth);
  }
  m.depth = child_depth + 1;
  return m;
}

TransparencyBounds transparency_bounds(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "transparency bounds need n >= 1");
  return {2 * n, 4 * n - 2};
}

const char* violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::DuplicateVariable: return "DuplicateVariable";
    case ViolationKind::ShapeOfShape: return "ShapeOfShape";
    case ViolationKind::ConstantNode: return "ConstantNode";
    case ViolationKind::OverlappingBinaryArgs: return "OverlappingBinaryArgs";
    case ViolationKind::SubtractionNode: return "SubtractionNode";
    case ViolationKind::UnsupportedNode: return "UnsupportedNode";
  }
  return "?";
}

bool TransparencyVerdict::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

bool has_duplicate_variables(const Node& root) {
  std::map<std::size_t, std::size_t> counts;
  count_vars(root, counts);
  return std::any_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second > 1; });
}

namespace {

// Returns the active set of `node` while checking disjointness at every
// multi-child node on the way up.
VarSet overlap_scan(const Node& node, bool& overlap) {
  VarSet acc;
  for (const Node& c : node.children) {
    VarSet cs = overlap_scan(c, overlap);
    for (std::size_t v : cs) {
      if (!acc.insert(v).second) overlap = true;
    }
  }
  if (node.kind == NodeKind::Variable) acc.insert(node.var);
  return acc;
}

void validate_node(const Node& node, const std::string& path, const ValidateOptions& opts,
                   std::vector<Violation>& out) {
  switch (node.kind) {
    case NodeKind::Constant:
      out.push_back({ViolationKind::ConstantNode, path, 0});
      break;
    case NodeKind::Shape:
      if (node.children.front().kind == NodeKind::Shape) {
        out.push_back({ViolationKind::ShapeOfShape, path, 0});
      }
      break;
    case NodeKind::Function:
      out.push_back({ViolationKind::UnsupportedNode, path, 0});
      break;
    case NodeKind::Binary:
      if (opts.reject_sub && node.op == BinaryOp::Sub) {
        out.push_back({ViolationKind::SubtractionNode, path, 0});
      }
      break;
    case NodeKind::Variable:
      break;
  }
  if (node.children.size() >= 2) {
    VarSet seen;
    bool overlap = false;
    for (const Node& c : node.children) {
      for (std::size_t v : active_vars(c)) {
        if (!seen.insert(v).second) overlap = true;
      }
    }
    if (overlap) out.push_back({ViolationKind::OverlappingBinaryArgs, path, 0});
  }
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    validate_node(node.children[i], child_path(path, i), opts, out);
  }
}

void duplicate_scan(const Node& node, const std::string& path,
                    std::map<std::size_t, std::size_t>& seen, std::vector<Violation>& out) {
  if (node.kind == NodeKind::Variable) {
    if (++seen[node.var] == 2) out.push_back({ViolationKind::DuplicateVariable, path, node.var});
  }
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    duplicate_scan(node.children[i], child_path(path, i), seen, out);
  }
}

}  // namespace

bool has_overlapping_binary_args(const Node& root) {
  bool overlap = false;
  overlap_scan(root, overlap);
  return overlap;
}

TransparencyVerdict validate_transparent(const ExprTree& tree, const ValidateOptions& opts) {
  TransparencyVerdict verdict;
  validate_node(tree.root, "", opts, verdict.violations);
  std::map<std::size_t, std::size_t> seen;
  duplicate_scan(tree.root, "", seen, verdict.violations);
  verdict.is_transparent = verdict.violations.empty();
  return verdict;
}

std::string describe(const Violation& v, const ExprTree& tree) {
  const std::string where = v.location.empty() ? "root" : "node " + v.location;
  if (v.kind == ViolationKind::DuplicateVariable) {
    return fmt::format("{}({}) at {}", violation_kind_name(v.kind), tree.var_name(v.var), where);
  }
  return fmt::format("{} at {}", violation_kind_name(v.kind), where);
}

namespace {

std::string format_constant(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e15) return fmt::format("{}", static_cast<long long>(v));
  return fmt::format("{}", v);
}

std::string render_node(const Node& node, const std::vector<std::string>& names, bool top,
                        bool anonymous_shapes) {
  auto name_of = [&](std::size_t i) {
    return i < names.size() ? names[i] : fmt::format("x{}", i + 1);
  };
  switch (node.kind) {
    case NodeKind::Variable:
      return name_of(node.var);
    case NodeKind::Constant: {
      std::string s = format_constant(node.value);
      return (top || node.value >= 0.0) ? s : "(" + s + ")";
    }
    case NodeKind::Binary: {
      std::string s = render_node(node.children[0], names, false, anonymous_shapes) + " " +
                      op_symbol(node.op) + " " +
                      render_node(node.children[1], names, false, anonymous_shapes);
      return top ? s : "(" + s + ")";
    }
    case NodeKind::Shape: {
      const std::string label = anonymous_shapes ? "s" : fmt::format("s{}", node.shape_id + 1);
      return label + "(" + render_node(node.children[0], names, true, anonymous_shapes) + ")";
    }
    case NodeKind::Function: {
      if (node.func == "pow" && node.children.size() == 2) {
        std::string s = render_node(node.children[0], names, false, anonymous_shapes) + " ^ " +
                        render_node(node.children[1], names, false, anonymous_shapes);
        return top ? s : "(" + s + ")";
      }
      if (node.func == "neg" && node.children.size() == 1) {
        return "(-" + render_node(node.children[0], names, false, anonymous_shapes) + ")";
      }
      std::string s = node.func + "(";
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        if (i) s += ", ";
        s += render_node(node.children[i], names, true, anonymous_shapes);
      }
      return s + ")";
    }
  }
  return {};
}

// Sorts commutative children bottom-up by their anonymous rendering and
// returns that rendering for the (now sorted) node.
std::string sort_commutative(Node& node, const std::vector<std::string>& names) {
  std::vector<std::string> keys;
  keys.reserve(node.children.size());
  for (Node& c : node.children) keys.push_back(sort_commutative(c, names));
  if (node.kind == NodeKind::Binary && is_commutative(node.op) && keys[1] < keys[0]) {
    std::swap(node.children[0], node.children[1]);
  }
  return render_node(node, names, false, true);
}

void renumber(Node& node, std::size_t& next) {
  if (node.kind == NodeKind::Shape) node.shape_id = next++;
  for (Node& c : node.children) renumber(c, next);
}

void collapse_chains(Node& node) {
  if (node.kind == NodeKind::Shape) {
    while (node.children.front().kind == NodeKind::Shape) {
      Node inner = std::move(node.children.front().children.front());
      node.children.front() = std::move(inner);
    }
  }
  for (Node& c : node.children) collapse_chains(c);
}

std::size_t shape_count(const Node& node) {
  std::size_t n = node.kind == NodeKind::Shape ? 1 : 0;
  for (const Node& c : node.children) n += shape_count(c);
  return n;
}

}  // namespace

std::string render(const Node& node, const std::vector<std::string>& var_names) {
  return render_node(node, var_names, true, false);
}

std::string render(const ExprTree& tree) { return render(tree.root, tree.var_names); }

void renumber_shapes(Node& root) {
  std::size_t next = 0;
  renumber(root, next);
}

void collapse_shape_chains(Node& root) {
  collapse_chains(root);
  renumber_shapes(root);
}

std::size_t count_shapes(const Node& node) { return shape_count(node); }

ExprTree canonicalize(const ExprTree& tree) {
  ExprTree out = tree;
  sort_commutative(out.root, out.var_names);
  renumber_shapes(out.root);
  return out;
}

std::string canonical_render(const ExprTree& tree) { return render(canonicalize(tree)); }

namespace {

void preorder_collect(const Node& node, std::vector<const Node*>& out) {
  out.push_back(&node);
  for (const Node& c : node.children) preorder_collect(c, out);
}

void preorder_collect_mut(Node& node, std::vector<Node*>& out) {
  out.push_back(&node);
  for (Node& c : node.children) preorder_collect_mut(c, out);
}

void parents_collect(const Node& node, std::size_t parent, std::vector<std::size_t>& out) {
  const std::size_t self = out.size();
  out.push_back(parent);
  for (const Node& c : node.children) parents_collect(c, self, out);
}

}  // namespace

std::vector<const Node*> preorder(const Node& root) {
  std::vector<const Node*> out;
  preorder_collect(root, out);
  return out;
}

std::vector<Node*> preorder_mut(Node& root) {
  std::vector<Node*> out;
  preorder_collect_mut(root, out);
  return out;
}

std::vector<std::size_t> parent_indices(const Node& root) {
  std::vector<std::size_t> out;
  parents_collect(root, std::numeric_limits<std::size_t>::max(), out);
  return out;
}

}  // namespace share
