#include <doctest.h>

#include <cmath>
#include <random>

#include "share/closedform.hpp"
#include "share/datasets.hpp"
#include "share/error.hpp"

using namespace share;

namespace {

std::size_t size_of(const std::string& text) { return structural_metrics(parse_equation(text).tree).size; }

bool has_constant(const Node& n) {
  for (const Node* p : preorder(n)) {
    if (p->kind == NodeKind::Constant) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("size convention") {
  CHECK(size_of("sin(x+1)") == 4);
  CHECK(size_of("r*F*sin(theta)") == 6);
  const ParsedEquation torque = parse_equation("r*F*sin(theta)");
  CHECK(torque.free_vars == std::vector<std::string>{"r", "F", "theta"});

  const ParsedEquation e = parse_equation("3*sin(x1+x2)");
  CHECK(e.free_vars == std::vector<std::string>{"x1", "x2"});
  CHECK(has_constant(e.tree.root));
  bool has_sin = false;
  for (const Node* p : preorder(e.tree.root)) has_sin |= p->kind == NodeKind::Function && p->func == "sin";
  CHECK(has_sin);
}

TEST_CASE("precedence and associativity") {
  const double x[] = {2.0, 3.0, 4.0};
  const ParseOptions opts{std::vector<std::string>{"a", "b", "c"}, 0};
  CHECK(evaluate(parse_equation("a - b - c", opts).tree.root, x) == -5.0);
  CHECK(evaluate(parse_equation("a / b / c", opts).tree.root, x) == doctest::Approx(2.0 / 12.0));
  CHECK(evaluate(parse_equation("-a^2", opts).tree.root, x) == -4.0);
  CHECK(evaluate(parse_equation("a + b * c", opts).tree.root, x) == 14.0);
  CHECK(evaluate(parse_equation("(a + b) * c", opts).tree.root, x) == 20.0);
  CHECK(evaluate(parse_equation("a^b^2", opts).tree.root, x) == 512.0);
}

TEST_CASE("render then reparse is stable") {
  for (const EquationSpec& e : equation_registry()) {
    const ParsedEquation p = parse_equation(e.formula);
    CHECK(parse_equation(render(p.tree)).tree == p.tree);
  }
}

TEST_CASE("collapse_univariate") {
  CHECK(render(collapse_univariate(parse_equation("sin(theta)"))) == "s1(theta)");
  const ExprTree torque = collapse_univariate(parse_equation("r*F*sin(theta)"));
  CHECK(render(torque) == "(r * F) * s1(theta)");
  CHECK(validate_transparent(torque).is_transparent);

  const ExprTree doppler = collapse_univariate(parse_equation("(1+v/c)/sqrt(1-v^2/c^2)"));
  CHECK_FALSE(validate_transparent(doppler).is_transparent);
}

TEST_CASE("collapsing preserves the function") {
  std::mt19937_64 rng(12);
  for (const EquationSpec& e : equation_registry()) {
    const ParsedEquation p = parse_equation(e.formula);
    const CollapseResult c = collapse_univariate_bound(p);
    std::vector<double> x(p.free_vars.size());
    for (int trial = 0; trial < 20; ++trial) {
      for (std::size_t j = 0; j < x.size(); ++j) {
        const auto [lo, hi] = e.ranges[j];
        x[j] = std::uniform_real_distribution<double>(lo, hi)(rng);
      }
      const double direct = evaluate(p.tree.root, x);
      if (!std::isfinite(direct)) continue;
      INFO(e.id);
      CHECK(evaluate_bound(c, x) == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("checker goldens") {
  const CheckerVerdict torque = check_transparent_expressible(parse_equation("r*F*sin(theta)"));
  CHECK(torque.direct_transparent);
  CHECK(torque.collapsed_shape_count == 1);

  const CheckerVerdict doppler = check_transparent_expressible(parse_equation("(1+v/c)/sqrt(1-v^2/c^2)*w0"));
  CHECK_FALSE(doppler.direct_transparent);
  CHECK(doppler.transparent_after_rewrites);
  REQUIRE(doppler.applied_substitutions.size() == 1);
  CHECK(doppler.applied_substitutions[0].expression == "v / c");

  const CheckerVerdict dist = check_transparent_expressible(parse_equation("x1*x2 + x1*x3"));
  CHECK_FALSE(dist.direct_transparent);
  CHECK_FALSE(dist.transparent_after_rewrites);
}

TEST_CASE("larger substitution budgets never lose a verdict") {
  const char* corpus[] = {"(1+v/c)/sqrt(1-v^2/c^2)*w0", "x1*x2 + x1*x3", "a/b + sin(a/b)", "(a-b)*(a-b)*c",
                          "exp(-(x-y)^2) * (x-y) + z"};
  for (const char* text : corpus) {
    const ParsedEquation p = parse_equation(text);
    bool prev = false;
    for (std::size_t k = 0; k <= 3; ++k) {
      const CheckerVerdict v = check_transparent_expressible(p, k);
      CHECK(v.direct_transparent == validate_transparent(collapse_univariate(p)).is_transparent);
      if (v.direct_transparent) CHECK(v.transparent_after_rewrites);
      CHECK((!prev || v.transparent_after_rewrites));
      prev = v.transparent_after_rewrites;
    }
  }
}

TEST_CASE("align_powers") {
  const ParsedEquation p = parse_equation("v^2/c^2");
  CHECK(render(align_powers(p.tree.root), p.tree.var_names) == "(v / c) ^ 2");
}

TEST_CASE("census") {
  const CensusReport empty = census({});
  CHECK(empty.n_total == 0);
  CHECK(empty.n_direct == 0);
  CHECK(empty.n_after_rewrites == 0);

  const auto lines = parse_corpus("# comment\n\ntorque :: r*F*sin(theta)\nbad :: (x +\nI.34.14 :: (1+v/c)/sqrt(1-v^2/c^2)*w0\n");
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].line == 4);
  const CensusReport r = census(lines);
  CHECK(r.n_total == 3);
  CHECK(r.n_direct == 1);
  CHECK(r.n_after_rewrites == 2);
  CHECK_FALSE(r.entries[1].error.empty());
  const std::string csv = census_csv(r);
  CHECK(csv.rfind("name,direct,after_rewrites,substitutions,shape_count,size,prop1_budget_2n,prop1_budget_4n_minus_2\n", 0) == 0);
  CHECK(csv.find("torque,true,true,,1,6,6,10\n") != std::string::npos);
  CHECK(csv.find("I.34.14,false,true,u1=v / c,") != std::string::npos);
}

TEST_CASE("bundled corpus verdicts") {
  std::string text;
  for (const EquationSpec& e : equation_registry()) text += e.id + " :: " + e.formula + "\n";
  const CensusReport r = census(parse_corpus(text));
  CHECK(r.n_total == equation_registry().size());
  for (const CensusEntry& e : r.entries) {
    REQUIRE(e.verdict);
    if (e.name == "I.18.12") CHECK(e.verdict->direct_transparent);
    if (e.name == "I.34.14") {
      CHECK_FALSE(e.verdict->direct_transparent);
      CHECK(e.verdict->transparent_after_rewrites);
    }
  }
}

TEST_CASE("interval bounds enclose samples") {
  std::mt19937_64 rng(2);
  for (const EquationSpec& e : equation_registry()) {
    const ParsedEquation p = parse_equation(e.formula);
    std::vector<Interval> box;
    for (const auto& [lo, hi] : e.ranges) box.push_back({lo, hi});
    const Interval b = interval_eval(p.tree.root, box);
    std::vector<double> x(box.size());
    for (int t = 0; t < 200; ++t) {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::uniform_real_distribution<double>(box[j].lo, box[j].hi)(rng);
      const double v = evaluate(p.tree.root, x);
      if (!std::isfinite(v)) continue;
      INFO(e.id);
      CHECK(v >= b.lo - 1e-9 * std::abs(b.lo));
      CHECK(v <= b.hi + 1e-9 * std::abs(b.hi));
    }
  }
}
