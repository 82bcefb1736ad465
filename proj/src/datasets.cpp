#include "share/datasets.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <random>

#include "share/bundled_data.hpp"
#include "share/closedform.hpp"
#include "share/error.hpp"
#include "share/io.hpp"
#include "share/parser.hpp"

namespace share {

double water_temperature(double m, double t0, double E, const WaterConstants& k) {
  if (!(m > 0.0) || !(t0 >= -100.0 && t0 <= 0.0) || !(E >= 0.0) || !std::isfinite(m) || !std::isfinite(E)) {
    throw Error(ErrorCode::DomainError, fmt::format("need m > 0, -100 <= t0 <= 0, E >= 0 (got {}, {}, {})", m, t0, E));
  }
  // Everything scales with mass, so work per gram.
  double u = E / m;
  const double warm_ice = -t0 * k.c_ice;
  if (u <= warm_ice) return std::min(0.0, t0 + u / k.c_ice);
  u -= warm_ice;
  if (u <= k.L_fusion) return 0.0;
  u -= k.L_fusion;
  const double warm_water = 100.0 * k.c_water;
  if (u <= warm_water) return std::clamp(u / k.c_water, 0.0, 100.0);
  u -= warm_water;
  if (u <= k.L_vapor) return 100.0;
  u -= k.L_vapor;
  return std::max(100.0, 100.0 + u / k.c_steam);
}

namespace {

Dataset make_dataset(std::vector<std::string> names, std::size_t n) {
  if (n < 2 || n % 2 != 0) throw Error(ErrorCode::InvalidArgument, "row count must be even and at least 2");
  Dataset d;
  d.column_names = std::move(names);
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d.column_names.size()));
  d.y.resize(static_cast<Eigen::Index>(n));
  d.n_train = n / 2;
  return d;
}

void add_noise(Dataset& d, std::uint64_t seed, double noise_std) {
  if (noise_std < 0.0) throw Error(ErrorCode::InvalidArgument, "noise_std must be non-negative");
  if (noise_std == 0.0) return;
  // Separate stream so covariates do not depend on the noise level.
  std::mt19937_64 rng(seed ^ 0x5bd1e995a5a5a5a5ULL);
  std::normal_distribution<double> noise(0.0, noise_std);
  for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y[i] += noise(rng);
}

}  // namespace

Dataset gen_temperature(std::size_t n, std::uint64_t seed, double noise_std) {
  Dataset d = make_dataset({"E", "m", "t0"}, n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mass(1.0, 4.0);
  std::uniform_real_distribution<double> start(-100.0, 0.0);
  std::uniform_real_distribution<double> per_gram(1.0, 800.0);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double m = mass(rng);
    const double t0 = start(rng);
    const double E = m * per_gram(rng);
    d.X(i, 0) = E;
    d.X(i, 1) = m;
    d.X(i, 2) = t0;
    d.y[i] = water_temperature(m, t0, E);
  }
  add_noise(d, seed, noise_std);
  return d;
}

namespace {

double sign(double v) { return (v > 0.0) - (v < 0.0); }

double pchip_edge(double h0, double h1, double m0, double m1) {
  double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
  if (sign(d) != sign(m0)) {
    d = 0.0;
  } else if (sign(m0) != sign(m1) && std::fabs(d) > 3.0 * std::fabs(m0)) {
    d = 3.0 * m0;
  }
  return d;
}

}  // namespace

PchipCurve::PchipCurve(std::string curve_name, std::vector<double> x, std::vector<double> y)
    : name(std::move(curve_name)), xs(std::move(x)), ys(std::move(y)) {
  const std::size_t n = xs.size();
  if (n < 3 || ys.size() != n) throw Error(ErrorCode::InvalidArgument, "pchip needs three or more matching knots");
  std::vector<double> h(n - 1), m(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = xs[i + 1] - xs[i];
    if (!(h[i] > 0.0)) throw Error(ErrorCode::InvalidArgument, "pchip knots must increase");
    m[i] = (ys[i + 1] - ys[i]) / h[i];
  }
  slopes.assign(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (sign(m[i - 1]) != sign(m[i]) || m[i - 1] == 0.0 || m[i] == 0.0) continue;
    // Weighted harmonic mean of the neighbouring secants.
    const double w1 = 2.0 * h[i] + h[i - 1];
    const double w2 = h[i] + 2.0 * h[i - 1];
    const double whmean = (w1 / m[i - 1] + w2 / m[i]) / (w1 + w2);
    slopes[i] = 1.0 / whmean;
  }
  slopes[0] = pchip_edge(h[0], h[1], m[0], m[1]);
  slopes[n - 1] = pchip_edge(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
}

double PchipCurve::operator()(double x) const {
  if (!(x >= xs.front() && x <= xs.back())) {
    throw Error(ErrorCode::DomainError, fmt::format("{} curve is defined on [{}, {}], got {}", name, lo(), hi(), x));
  }
  std::size_t i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  i = std::clamp<std::size_t>(i, 1, xs.size() - 1) - 1;
  const double h = xs[i + 1] - xs[i];
  const double slope = (ys[i + 1] - ys[i]) / h;
  const double c3 = (slopes[i] + slopes[i + 1] - 2.0 * slope) / (h * h);
  const double c2 = (3.0 * slope - 2.0 * slopes[i] - slopes[i + 1]) / h;
  const double t = x - xs[i];
  return ((c3 * t + c2) * t + slopes[i]) * t + ys[i];
}

const std::vector<PchipCurve>& risk_curves() {
  // Saturating in nodes, U-shaped in age, increasing in bmi.
  static const std::vector<PchipCurve> curves{
      PchipCurve("nodes", {0, 5, 10, 20, 30, 40, 50}, {-0.6, -0.1, 0.25, 0.6, 0.8, 0.9, 0.95}),
      PchipCurve("age", {45, 50, 55, 60, 65, 70}, {0.5, 0.1, -0.15, -0.15, 0.1, 0.5}),
      PchipCurve("bmi", {17, 22, 27, 32, 38, 45}, {-0.4, -0.25, 0.0, 0.2, 0.4, 0.6}),
  };
  return curves;
}

Dataset gen_risk_scores(std::size_t n, std::uint64_t seed, double noise_std) {
  Dataset d = make_dataset({"nodes", "age", "bmi"}, n);
  const auto& curves = risk_curves();
  std::mt19937_64 rng(seed);
  std::vector<std::uniform_real_distribution<double>> dists;
  for (const PchipCurve& c : curves) dists.emplace_back(c.lo(), c.hi());
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    double label = 0.0;
    for (std::size_t j = 0; j < curves.size(); ++j) {
      const double v = dists[j](rng);
      d.X(i, static_cast<Eigen::Index>(j)) = v;
      label += curves[j](v);
    }
    d.y[i] = label;
  }
  add_noise(d, seed, noise_std);
  return d;
}

const std::vector<EquationSpec>& equation_registry() {
  static const std::vector<EquationSpec> registry = [] {
    using json = nlohmann::json;
    std::vector<EquationSpec> out;
    const json j = json::parse(bundled_equations_json());
    const auto def = j.at("default_range").get<std::pair<double, double>>();
    for (const json& e : j.at("equations")) {
      EquationSpec spec;
      spec.id = e.at("id").get<std::string>();
      spec.output = e.at("output").get<std::string>();
      spec.formula = e.at("formula").get<std::string>();
      spec.variables = e.at("variables").get<std::vector<std::string>>();
      for (const std::string& v : spec.variables) {
        if (e.contains("ranges") && e["ranges"].contains(v)) {
          spec.ranges.push_back(e["ranges"][v].get<std::pair<double, double>>());
        } else {
          spec.ranges.push_back(def);
        }
      }
      if (e.contains("guards")) {
        for (const json& g : e["guards"]) {
          spec.guards.push_back({g.at("expr").get<std::string>(), g.at("lo").get<double>(), g.at("hi").get<double>()});
        }
      }
      out.push_back(std::move(spec));
    }
    return out;
  }();
  return registry;
}

const EquationSpec& find_equation(std::string_view id) {
  for (const EquationSpec& e : equation_registry()) {
    if (e.id == id) return e;
  }
  throw Error(ErrorCode::UnknownEquation, fmt::format("no equation '{}' in the registry", id));
}

Dataset gen_equation(std::string_view id, std::size_t n, std::uint64_t seed, const RangeOverrides& overrides,
                     double noise_std) {
  const EquationSpec& spec = find_equation(id);
  std::vector<std::pair<double, double>> ranges = spec.ranges;
  for (const auto& [name, range] : overrides) {
    const auto it = std::find(spec.variables.begin(), spec.variables.end(), name);
    if (it == spec.variables.end()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("equation {} has no variable '{}'", spec.id, name));
    }
    ranges[static_cast<std::size_t>(it - spec.variables.begin())] = range;
  }
  for (const auto& r : ranges) {
    if (!(r.first < r.second)) throw Error(ErrorCode::InvalidArgument, "range lower bound must be below upper bound");
  }

  ParseOptions opts;
  opts.known_vars = spec.variables;
  const ExprTree formula = parse_expression(spec.formula, opts);
  std::vector<Interval> boxes;
  for (const auto& r : ranges) boxes.push_back({r.first, r.second});
  for (const EquationGuard& g : spec.guards) {
    const Interval iv = interval_eval(parse_expression(g.expr, opts).root, boxes);
    if (!(iv.lo > g.lo && iv.hi < g.hi)) {
      throw Error(ErrorCode::DomainError,
                  fmt::format("{}: sampling ranges let {} reach [{}, {}], outside ({}, {})", spec.id, g.expr, iv.lo,
                              iv.hi, g.lo, g.hi));
    }
  }

  Dataset d = make_dataset(spec.variables, n);
  std::mt19937_64 rng(seed);
  std::vector<std::uniform_real_distribution<double>> dists;
  for (const auto& r : ranges) dists.emplace_back(r.first, r.second);
  std::vector<double> row(spec.variables.size());
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = dists[j](rng);
      d.X(i, static_cast<Eigen::Index>(j)) = row[j];
    }
    d.y[i] = evaluate(formula.root, row);
    if (!std::isfinite(d.y[i])) {
      throw Error(ErrorCode::DomainError, fmt::format("{}: non-finite label at row {}", spec.id, i + 1));
    }
  }
  add_noise(d, seed, noise_std);
  return d;
}

std::string to_csv(const Dataset& data) {
  std::string out;
  for (const std::string& c : data.column_names) out += c + ",";
  out += "target\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) out += fmt::format("{:.17g},", data.X(i, j));
    out += fmt::format("{:.17g}\n", data.y[i]);
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset parse_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  if (lines.empty() || trim(lines[0]).empty()) throw ParseError("missing header row", 1, 1);

  std::vector<std::string> header;
  for (std::string_view f : split_fields(trim(lines[0]))) header.emplace_back(trim(f));
  if (header.size() < 2 || header.back() != "target") {
    throw Error(ErrorCode::SchemaError, "header must list the feature columns followed by 'target'");
  }
  for (std::size_t i = 0; i + 1 < header.size(); ++i) {
    if (header[i].empty()) throw Error(ErrorCode::SchemaError, fmt::format("column {} has no name", i + 1));
    if (std::find(header.begin(), header.begin() + static_cast<long>(i), header[i]) != header.begin() + static_cast<long>(i)) {
      throw Error(ErrorCode::SchemaError, fmt::format("duplicate column '{}'", header[i]));
    }
  }
  const std::size_t n_cols = header.size();

  std::vector<std::vector<double>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string_view line = trim(lines[li]);
    if (line.empty()) continue;
    const std::vector<std::string_view> fields = split_fields(line);
    if (fields.size() != n_cols) {
      throw ParseError(fmt::format("expected {} fields, found {}", n_cols, fields.size()), li + 1, 1);
    }
    std::vector<double> row(n_cols);
    std::size_t col = 1;
    for (std::size_t j = 0; j < n_cols; ++j) {
      const std::string_view f = trim(fields[j]);
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError(fmt::format("'{}' is not a finite number", f), li + 1, col);
      }
      row[j] = v;
      col += fields[j].size() + 1;
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw Error(ErrorCode::SchemaError, "need at least two data rows");

  Dataset d;
  d.column_names.assign(header.begin(), header.end() - 1);
  d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_cols - 1));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < n_cols; ++j) {
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    d.y[static_cast<Eigen::Index>(i)] = rows[i].back();
  }
  d.n_train = rows.size() / 2;
  return d;
}

void csv_write(const Dataset& data, const std::filesystem::path& path) { write_file_atomic(path, to_csv(data)); }

Dataset csv_read(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

}  // namespace share
