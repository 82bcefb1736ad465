#pragma once

// Closed-form equations: exact evaluation, interval bounds, collapsing
// univariate pieces into shapes, and the two-stage transparency check.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "share/expr.hpp"
#include "share/parser.hpp"

namespace share {

struct ParsedEquation {
  ExprTree tree;
  std::vector<std::string> free_vars;
  std::string source_text;
};

ParsedEquation parse_equation(std::string_view text, const ParseOptions& opts = {});

/// Plain (unprotected) evaluation of a closed-form tree. Shapes are not allowed.
double evaluate(const Node& node, std::span<const double> x);

// A collapsed tree plus, for each shape id, the exact univariate function it
// stands for. Bodies refer to their argument as variable index `placeholder`.
struct CollapseResult {
  ExprTree tree;
  std::vector<Node> bindings;
  std::size_t placeholder = 0;
};

/// Replaces every maximal single-variable subtree (other than a bare variable)
/// by a shape, and folds unary functions and constant operands around
/// multi-variable subtrees into enclosing shapes.
CollapseResult collapse_univariate_bound(const ParsedEquation& eq);
ExprTree collapse_univariate(const ParsedEquation& eq);

/// Evaluates a collapsed tree with each shape replaced by its binding.
double evaluate_bound(const CollapseResult& collapsed, std::span<const double> x);

struct Substitution {
  std::string expression;
  std::string variable;
};

struct CheckerVerdict {
  bool direct_transparent = false;
  bool transparent_after_rewrites = false;
  std::vector<Substitution> applied_substitutions;
  std::size_t collapsed_shape_count = 0;
  std::vector<Violation> violations;
  // Tree that passed the check (or the direct collapse if nothing passed).
  ExprTree rewritten;
  std::size_t size = 0;
  std::size_t n_vars = 0;
};

CheckerVerdict check_transparent_expressible(const ParsedEquation& eq, std::size_t max_substitutions = 2);

/// Rewrites x^k / y^k and x^k * y^k into (x/y)^k and (x*y)^k.
Node align_powers(const Node& node);

struct CensusEntry {
  std::string name;
  std::string source;
  std::optional<CheckerVerdict> verdict;
  std::string error;
};

struct CensusReport {
  std::size_t n_total = 0;
  std::size_t n_direct = 0;
  std::size_t n_after_rewrites = 0;
  std::vector<CensusEntry> entries;
};

struct CorpusLine {
  std::string name;
  std::string expression;
  std::size_t line = 0;
};

/// One equation per line as `name :: expression`; blank lines and `#` comments are skipped.
std::vector<CorpusLine> parse_corpus(std::string_view text);

CensusReport census(const std::vector<CorpusLine>& corpus, std::size_t max_substitutions = 2);
std::string census_csv(const CensusReport& report);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Conservative enclosure of the node's values when each variable ranges over its interval.
Interval interval_eval(const Node& node, const std::vector<Interval>& vars);

}  // namespace share
