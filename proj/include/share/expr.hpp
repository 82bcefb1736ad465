#pragma once

// Expression trees for shape arithmetic expressions: variables, constants,
// binary arithmetic, trainable shape placeholders and (for closed-form input
// only) named functions such as sin or pow.

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace share {

enum class BinaryOp { Add, Sub, Mul, Div };

enum class NodeKind { Variable, Constant, Binary, Shape, Function };

const char* op_symbol(BinaryOp op);
bool is_commutative(BinaryOp op);

struct Node {
  NodeKind kind = NodeKind::Variable;
  BinaryOp op = BinaryOp::Add;
  std::size_t var = 0;
  double value = 0.0;
  std::size_t shape_id = 0;
  std::string func;
  std::vector<Node> children;

  static Node variable(std::size_t index);
  static Node constant(double v);
  static Node binary(BinaryOp op, Node lhs, Node rhs);
  static Node shape(std::size_t id, Node arg);
  static Node function(std::string name, std::vector<Node> args);

  bool is_leaf() const { return children.empty(); }

  friend bool operator==(const Node&, const Node&) = default;
};

using VarSet = std::set<std::size_t>;

struct ExprTree {
  Node root;
  std::vector<std::string> var_names;

  std::size_t n_vars() const { return var_names.size(); }
  std::string var_name(std::size_t index) const;

  friend bool operator==(const ExprTree&, const ExprTree&) = default;
};

/// Variables referenced anywhere in the subtree rooted at `node`.
VarSet active_vars(const Node& node);

struct StructuralMetrics {
  std::size_t size = 0;
  std::size_t depth = 0;
  std::size_t n_shapes = 0;
  std::size_t n_binary_ops = 0;
  std::size_t n_leaves = 0;
};

StructuralMetrics structural_metrics(const Node& node);
inline StructuralMetrics structural_metrics(const ExprTree& tree) {
  return structural_metrics(tree.root);
}

struct TransparencyBounds {
  std::size_t max_depth;
  std::size_t max_size;
};

/// Depth and size limits every transparent expression over `n` variables obeys.
TransparencyBounds transparency_bounds(std::size_t n);

enum class ViolationKind {
  DuplicateVariable,
  ShapeOfShape,
  ConstantNode,
  OverlappingBinaryArgs,
  SubtractionNode,
  UnsupportedNode,
};

const char* violation_kind_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  // Dot-separated child indices from the root ("" is the root itself).
  std::string location;
  std::size_t var = 0;  // meaningful for DuplicateVariable only

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct TransparencyVerdict {
  bool is_transparent = true;
  std::vector<Violation> violations;

  bool has(ViolationKind kind) const;
};

struct ValidateOptions {
  bool reject_sub = false;
};

TransparencyVerdict validate_transparent(const ExprTree& tree, const ValidateOptions& opts = {});

// The two halves of the disjointness criterion; transparency requires they agree.
bool has_duplicate_variables(const Node& root);
bool has_overlapping_binary_args(const Node& root);

std::string describe(const Violation& v, const ExprTree& tree);

/// Infix text with explicit parentheses. Shapes print as s<id+1>(...).
std::string render(const ExprTree& tree);
std::string render(const Node& node, const std::vector<std::string>& var_names);

/// Commutative children sorted, shape ids renumbered in preorder.
ExprTree canonicalize(const ExprTree& tree);
std::string canonical_render(const ExprTree& tree);

/// Renumber shape ids 0,1,2,... in preorder.
void renumber_shapes(Node& root);

/// Replace every s_i(s_j(z)) by a single shape applied to z, then renumber.
void collapse_shape_chains(Node& root);

std::size_t count_shapes(const Node& node);

/// Preorder list of the nodes of a tree.
std::vector<const Node*> preorder(const Node& root);
std::vector<Node*> preorder_mut(Node& root);

/// Preorder index of every node's parent (root maps to SIZE_MAX).
std::vector<std::size_t> parent_indices(const Node& root);

}  // namespace share
