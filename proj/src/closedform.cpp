#include "share/closedform.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>

#include "share/error.hpp"

namespace share {

ParsedEquation parse_equation(std::string_view text, const ParseOptions& opts) {
  ParsedEquation eq;
  eq.tree = parse_expression(text, opts);
  for (std::size_t v : active_vars(eq.tree.root)) eq.free_vars.push_back(eq.tree.var_name(v));
  eq.source_text = std::string(text);
  return eq;
}

namespace {

using ShapeFn = std::function<double(std::size_t, double)>;

double apply_function(const std::string& f, std::span<const double> args) {
  if (f == "pow" && args.size() == 2) return std::pow(args[0], args[1]);
  if (args.size() != 1) throw Error(ErrorCode::UnknownFunction, fmt::format("bad call to '{}'", f));
  const double a = args[0];
  if (f == "neg") return -a;
  if (f == "sin") return std::sin(a);
  if (f == "cos") return std::cos(a);
  if (f == "tan") return std::tan(a);
  if (f == "exp") return std::exp(a);
  if (f == "log") return std::log(a);
  if (f == "sqrt") return std::sqrt(a);
  throw Error(ErrorCode::UnknownFunction, fmt::format("unknown function '{}'", f));
}

double eval_impl(const Node& node, std::span<const double> x, const ShapeFn* shape_fn) {
  switch (node.kind) {
    case NodeKind::Variable:
      if (node.var >= x.size()) throw Error(ErrorCode::InvalidArgument, "variable index out of range");
      return x[node.var];
    case NodeKind::Constant:
      return node.value;
    case NodeKind::Binary: {
      const double a = eval_impl(node.children[0], x, shape_fn);
      const double b = eval_impl(node.children[1], x, shape_fn);
      switch (node.op) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div: return a / b;
      }
      return 0.0;
    }
    case NodeKind::Shape:
      if (!shape_fn) throw Error(ErrorCode::InvalidArgument, "cannot evaluate an unbound shape");
      return (*shape_fn)(node.shape_id, eval_impl(node.children[0], x, shape_fn));
    case NodeKind::Function: {
      std::vector<double> args;
      for (const Node& c : node.children) args.push_back(eval_impl(c, x, shape_fn));
      return apply_function(node.func, args);
    }
  }
  return 0.0;
}

Node substitute_var(const Node& node, std::size_t var, const Node& replacement) {
  if (node.kind == NodeKind::Variable && node.var == var) return replacement;
  Node out = node;
  for (Node& c : out.children) c = substitute_var(c, var, replacement);
  return out;
}

class Collapser {
 public:
  explicit Collapser(std::size_t placeholder) : placeholder_(placeholder) {}

  Node run(const Node& node) {
    if (node.kind == NodeKind::Variable) return node;
    const VarSet vars = active_vars(node);
    if (vars.empty()) return node;
    if (vars.size() == 1) {
      const std::size_t v = *vars.begin();
      return make_shape(Node::variable(v), substitute_var(node, v, hole()));
    }
    switch (node.kind) {
      case NodeKind::Binary: {
        const Node& a = node.children[0];
        const Node& b = node.children[1];
        if (active_vars(a).empty()) return wrap(run(b), Node::binary(node.op, a, hole()));
        if (active_vars(b).empty()) return wrap(run(a), Node::binary(node.op, hole(), b));
        return Node::binary(node.op, run(a), run(b));
      }
      case NodeKind::Function: {
        if (node.children.size() == 1) return wrap(run(node.children[0]), Node::function(node.func, {hole()}));
        if (node.func == "pow" && node.children.size() == 2) {
          const Node& base = node.children[0];
          const Node& expo = node.children[1];
          if (active_vars(expo).empty()) return wrap(run(base), Node::function("pow", {hole(), expo}));
          if (active_vars(base).empty()) return wrap(run(expo), Node::function("pow", {base, hole()}));
        }
        Node out = node;
        for (Node& c : out.children) c = run(c);
        return out;
      }
      case NodeKind::Shape:
        return wrap(run(node.children[0]), hole());
      default:
        return node;
    }
  }

  std::vector<Node>& bindings() { return bindings_; }

 private:
  Node hole() const { return Node::variable(placeholder_); }

  Node make_shape(Node arg, Node body) {
    bindings_.push_back(std::move(body));
    return Node::shape(bindings_.size() - 1, std::move(arg));
  }

  // Applies `body` on top of `child`, merging into child's shape when it is one.
  Node wrap(Node child, Node body) {
    if (child.kind == NodeKind::Shape) {
      Node& inner = bindings_[child.shape_id];
      inner = substitute_var(body, placeholder_, inner);
      return child;
    }
    return make_shape(std::move(child), std::move(body));
  }

  std::size_t placeholder_;
  std::vector<Node> bindings_;
};

}  // namespace

double evaluate(const Node& node, std::span<const double> x) { return eval_impl(node, x, nullptr); }

CollapseResult collapse_univariate_bound(const ParsedEquation& eq) {
  CollapseResult out;
  out.placeholder = eq.tree.n_vars();
  Collapser c(out.placeholder);
  Node root = c.run(eq.tree.root);
  std::vector<Node> ordered;
  for (const Node* n : preorder(root)) {
    if (n->kind == NodeKind::Shape) ordered.push_back(c.bindings()[n->shape_id]);
  }
  renumber_shapes(root);
  out.tree = ExprTree{std::move(root), eq.tree.var_names};
  out.bindings = std::move(ordered);
  return out;
}

ExprTree collapse_univariate(const ParsedEquation& eq) { return collapse_univariate_bound(eq).tree; }

double evaluate_bound(const CollapseResult& collapsed, std::span<const double> x) {
  std::vector<double> ext(x.begin(), x.end());
  ext.resize(std::max(ext.size(), collapsed.placeholder + 1), 0.0);
  const ShapeFn fn = [&](std::size_t id, double z) {
    std::vector<double> local = ext;
    local[collapsed.placeholder] = z;
    return evaluate(collapsed.bindings.at(id), local);
  };
  return eval_impl(collapsed.tree.root, ext, &fn);
}

Node align_powers(const Node& node) {
  Node out = node;
  for (Node& c : out.children) c = align_powers(c);
  if (out.kind == NodeKind::Binary && (out.op == BinaryOp::Div || out.op == BinaryOp::Mul)) {
    const Node& a = out.children[0];
    const Node& b = out.children[1];
    auto is_pow = [](const Node& n) {
      return n.kind == NodeKind::Function && n.func == "pow" && n.children.size() == 2 &&
             n.children[1].kind == NodeKind::Constant;
    };
    if (is_pow(a) && is_pow(b) && a.children[1].value == b.children[1].value) {
      Node inner = Node::binary(out.op, a.children[0], b.children[0]);
      Node expo = a.children[1];
      return Node::function("pow", {std::move(inner), std::move(expo)});
    }
  }
  return out;
}

namespace {

struct Pattern {
  BinaryOp op;
  std::size_t a;
  std::size_t b;
};

bool matches(const Node& n, const Pattern& p) {
  if (n.kind != NodeKind::Binary || n.op != p.op) return false;
  const Node& l = n.children[0];
  const Node& r = n.children[1];
  if (l.kind != NodeKind::Variable || r.kind != NodeKind::Variable) return false;
  if (l.var == p.a && r.var == p.b) return true;
  return is_commutative(p.op) && l.var == p.b && r.var == p.a;
}

Node replace_pattern(const Node& node, const Pattern& p, std::size_t fresh) {
  if (matches(node, p)) return Node::variable(fresh);
  Node out = node;
  for (Node& c : out.children) c = replace_pattern(c, p, fresh);
  return out;
}

struct StageResult {
  bool transparent = false;
  ExprTree tree;
  std::vector<Violation> violations;
};

StageResult stage_one(const ParsedEquation& eq) {
  StageResult r;
  r.tree = collapse_univariate(eq);
  const TransparencyVerdict v = validate_transparent(r.tree);
  r.transparent = v.is_transparent;
  r.violations = v.violations;
  return r;
}

std::string fresh_name(const std::vector<std::string>& taken, std::size_t& counter) {
  for (;;) {
    std::string name = fmt::format("u{}", ++counter);
    if (std::find(taken.begin(), taken.end(), name) == taken.end()) return name;
  }
}

void combinations(std::size_t n, std::size_t k, std::size_t start, std::vector<std::size_t>& cur,
                  const std::function<bool(const std::vector<std::size_t>&)>& visit, bool& done) {
  if (done) return;
  if (cur.size() == k) {
    done = visit(cur);
    return;
  }
  for (std::size_t i = start; i < n && !done; ++i) {
    cur.push_back(i);
    combinations(n, k, i + 1, cur, visit, done);
    cur.pop_back();
  }
}

}  // namespace

CheckerVerdict check_transparent_expressible(const ParsedEquation& eq, std::size_t max_substitutions) {
  CheckerVerdict verdict;
  verdict.size = structural_metrics(eq.tree).size;
  verdict.n_vars = active_vars(eq.tree.root).size();

  StageResult direct = stage_one(eq);
  verdict.direct_transparent = direct.transparent;
  verdict.transparent_after_rewrites = direct.transparent;
  verdict.violations = direct.violations;
  verdict.collapsed_shape_count = count_shapes(direct.tree.root);
  verdict.rewritten = direct.tree;
  if (direct.transparent || max_substitutions == 0) return verdict;

  // Two-variable sub-expressions that occur at least twice.
  const Node aligned = align_powers(eq.tree.root);
  std::map<std::string, std::pair<Pattern, std::size_t>> counts;
  for (const Node* n : preorder(aligned)) {
    if (n->kind != NodeKind::Binary) continue;
    const Node& l = n->children[0];
    const Node& r = n->children[1];
    if (l.kind != NodeKind::Variable || r.kind != NodeKind::Variable || l.var == r.var) continue;
    Pattern p{n->op, l.var, r.var};
    if (is_commutative(p.op) && eq.tree.var_name(p.b) < eq.tree.var_name(p.a)) std::swap(p.a, p.b);
    const std::string key = render(Node::binary(p.op, Node::variable(p.a), Node::variable(p.b)), eq.tree.var_names);
    auto [it, inserted] = counts.try_emplace(key, p, 0);
    ++it->second.second;
  }
  std::vector<std::pair<std::string, Pattern>> candidates;
  for (const auto& [key, entry] : counts) {
    if (entry.second >= 2) candidates.emplace_back(key, entry.first);
  }

  bool done = false;
  const std::size_t k_max = std::min(max_substitutions, candidates.size());
  for (std::size_t k = 1; k <= k_max && !done; ++k) {
    std::vector<std::size_t> cur;
    combinations(candidates.size(), k, 0, cur, [&](const std::vector<std::size_t>& pick) {
      ParsedEquation sub;
      sub.source_text = eq.source_text;
      sub.tree.var_names = eq.tree.var_names;
      Node root = aligned;
      std::vector<Substitution> subs;
      std::size_t counter = 0;
      for (std::size_t idx : pick) {
        const std::string name = fresh_name(sub.tree.var_names, counter);
        sub.tree.var_names.push_back(name);
        root = replace_pattern(root, candidates[idx].second, sub.tree.var_names.size() - 1);
        subs.push_back({candidates[idx].first, name});
      }
      sub.tree.root = std::move(root);
      StageResult r = stage_one(sub);
      if (!r.transparent) return false;
      verdict.transparent_after_rewrites = true;
      verdict.applied_substitutions = std::move(subs);
      verdict.collapsed_shape_count = count_shapes(r.tree.root);
      verdict.rewritten = std::move(r.tree);
      return true;
    }, done);
  }
  return verdict;
}

std::vector<CorpusLine> parse_corpus(std::string_view text) {
  std::vector<CorpusLine> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto trim = [](std::string_view s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
      return s;
    };
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    CorpusLine entry;
    entry.line = line_no;
    const std::size_t sep = line.find("::");
    if (sep == std::string_view::npos) {
      entry.name = fmt::format("line{}", line_no);
      entry.expression = std::string(line);
    } else {
      entry.name = std::string(trim(line.substr(0, sep)));
      entry.expression = std::string(trim(line.substr(sep + 2)));
    }
    out.push_back(std::move(entry));
  }
  return out;
}

CensusReport census(const std::vector<CorpusLine>& corpus, std::size_t max_substitutions) {
  CensusReport report;
  for (const CorpusLine& c : corpus) {
    CensusEntry entry;
    entry.name = c.name;
    entry.source = c.expression;
    ++report.n_total;
    try {
      ParseOptions opts;
      opts.line = c.line;
      const ParsedEquation eq = parse_equation(c.expression, opts);
      entry.verdict = check_transparent_expressible(eq, max_substitutions);
      if (entry.verdict->direct_transparent) ++report.n_direct;
      if (entry.verdict->transparent_after_rewrites) ++report.n_after_rewrites;
    } catch (const Error& e) {
      entry.error = e.what();
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string census_csv(const CensusReport& report) {
  std::string out =
      "name,direct,after_rewrites,substitutions,shape_count,size,prop1_budget_2n,prop1_budget_4n_minus_2\n";
  for (const CensusEntry& e : report.entries) {
    if (!e.verdict) {
      out += fmt::format("{},error,error,{},,,,\n", csv_field(e.name), csv_field(e.error));
      continue;
    }
    const CheckerVerdict& v = *e.verdict;
    std::string subs;
    for (const Substitution& s : v.applied_substitutions) {
      if (!subs.empty()) subs += ';';
      subs += s.variable + "=" + s.expression;
    }
    std::string b2n, b4n;
    if (v.n_vars > 0) {
      const TransparencyBounds b = transparency_bounds(v.n_vars);
      b2n = std::to_string(b.max_depth);
      b4n = std::to_string(b.max_size);
    }
    out += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(e.name), v.direct_transparent,
                       v.transparent_after_rewrites, csv_field(subs), v.collapsed_shape_count, v.size, b2n, b4n);
  }
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Interval hull(std::initializer_list<double> vals) {
  Interval r{kInf, -kInf};
  for (double v : vals) {
    if (std::isnan(v)) return {-kInf, kInf};
    r.lo = std::min(r.lo, v);
    r.hi = std::max(r.hi, v);
  }
  return r;
}

bool contains_point(const Interval& iv, double offset, double period) {
  // Is there an integer k with offset + k * period inside iv?
  const double k = std::ceil((iv.lo - offset) / period);
  return offset + k * period <= iv.hi;
}

Interval sin_interval(const Interval& iv) {
  const double two_pi = 2.0 * std::numbers::pi;
  if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.hi - iv.lo >= two_pi) return {-1.0, 1.0};
  Interval r = hull({std::sin(iv.lo), std::sin(iv.hi)});
  if (contains_point(iv, std::numbers::pi / 2.0, two_pi)) r.hi = 1.0;
  if (contains_point(iv, -std::numbers::pi / 2.0, two_pi)) r.lo = -1.0;
  return r;
}

}  // namespace

Interval interval_eval(const Node& node, const std::vector<Interval>& vars) {
  switch (node.kind) {
    case NodeKind::Variable:
      if (node.var >= vars.size()) throw Error(ErrorCode::InvalidArgument, "variable index out of range");
      return vars[node.var];
    case NodeKind::Constant:
      return {node.value, node.value};
    case NodeKind::Binary: {
      const Interval a = interval_eval(node.children[0], vars);
      const Interval b = interval_eval(node.children[1], vars);
      switch (node.op) {
        case BinaryOp::Add: return {a.lo + b.lo, a.hi + b.hi};
        case BinaryOp::Sub: return {a.lo - b.hi, a.hi - b.lo};
        case BinaryOp::Mul: return hull({a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi});
        case BinaryOp::Div:
          if (b.lo <= 0.0 && b.hi >= 0.0) return {-kInf, kInf};
          return hull({a.lo / b.lo, a.lo / b.hi, a.hi / b.lo, a.hi / b.hi});
      }
      break;
    }
    case NodeKind::Shape:
      return {-kInf, kInf};
    case NodeKind::Function: {
      const std::string& f = node.func;
      if (f == "pow" && node.children.size() == 2) {
        const Interval base = interval_eval(node.children[0], vars);
        const Interval expo = interval_eval(node.children[1], vars);
        if (expo.lo == expo.hi && expo.lo == std::round(expo.lo)) {
          const double k = expo.lo;
          const bool even = std::fmod(std::fabs(k), 2.0) == 0.0;
          if (k >= 0.0 && even && base.lo <= 0.0 && base.hi >= 0.0) {
            return {0.0, std::max(std::pow(base.lo, k), std::pow(base.hi, k))};
          }
          if (k < 0.0 && base.lo <= 0.0 && base.hi >= 0.0) return {-kInf, kInf};
          return hull({std::pow(base.lo, k), std::pow(base.hi, k)});
        }
        if (base.lo > 0.0) {
          return hull({std::pow(base.lo, expo.lo), std::pow(base.lo, expo.hi), std::pow(base.hi, expo.lo),
                       std::pow(base.hi, expo.hi)});
        }
        return {-kInf, kInf};
      }
      if (node.children.size() != 1) return {-kInf, kInf};
      const Interval a = interval_eval(node.children[0], vars);
      if (f == "neg") return {-a.hi, -a.lo};
      if (f == "exp") return {std::exp(a.lo), std::exp(a.hi)};
      if (f == "log") return a.lo > 0.0 ? Interval{std::log(a.lo), std::log(a.hi)} : Interval{-kInf, kInf};
      if (f == "sqrt") return a.lo >= 0.0 ? Interval{std::sqrt(a.lo), std::sqrt(a.hi)} : Interval{-kInf, kInf};
      if (f == "sin") return sin_interval(a);
      if (f == "cos") return sin_interval({a.lo + std::numbers::pi / 2.0, a.hi + std::numbers::pi / 2.0});
      return {-kInf, kInf};
    }
  }
  return {-kInf, kInf};
}

}  // namespace share
