#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace share {

// Rows [0, n_train) are the training split, the rest validation.
struct Dataset {
  std::vector<std::string> column_names;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::size_t n_train = 0;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  Eigen::MatrixXd X_train() const { return X.topRows(static_cast<Eigen::Index>(n_train)); }
  Eigen::VectorXd y_train() const { return y.head(static_cast<Eigen::Index>(n_train)); }
  Eigen::MatrixXd X_val() const { return X.bottomRows(X.rows() - static_cast<Eigen::Index>(n_train)); }
  Eigen::VectorXd y_val() const { return y.tail(y.size() - static_cast<Eigen::Index>(n_train)); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.column_names == b.column_names && a.n_train == b.n_train && a.X.rows() == b.X.rows() &&
           a.X.cols() == b.X.cols() && a.X == b.X && a.y == b.y;
  }
};

/// Units: cal/(g*degC) for the heat capacities, cal/g for the latent heats.
struct WaterConstants {
  double c_ice = 0.50;
  double c_water = 1.00;
  double c_steam = 0.48;
  double L_fusion = 79.72;
  double L_vapor = 540.00;
};

/// Final temperature of m grams of ice at t0 degC after absorbing E calories.
double water_temperature(double m, double t0, double E, const WaterConstants& k = {});

/// Columns E, m, t0.
Dataset gen_temperature(std::size_t n = 2000, std::uint64_t seed = 0, double noise_std = 0.0);

/// Monotone cubic Hermite curve through fixed control points.
struct PchipCurve {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> slopes;

  PchipCurve(std::string name, std::vector<double> xs, std::vector<double> ys);
  double operator()(double x) const;
  double lo() const { return xs.front(); }
  double hi() const { return xs.back(); }
};

/// Generator curves for nodes, age and bmi, in that order.
const std::vector<PchipCurve>& risk_curves();

/// Columns nodes, age, bmi.
Dataset gen_risk_scores(std::size_t n = 200, std::uint64_t seed = 0, double noise_std = 0.0);

struct EquationGuard {
  std::string expr;
  double lo;
  double hi;
};

struct EquationSpec {
  std::string id;
  std::string output;
  std::string formula;
  std::vector<std::string> variables;
  std::vector<std::pair<double, double>> ranges;
  std::vector<EquationGuard> guards;
};

const std::vector<EquationSpec>& equation_registry();
const EquationSpec& find_equation(std::string_view id);

using RangeOverrides = std::map<std::string, std::pair<double, double>>;

Dataset gen_equation(std::string_view id, std::size_t n = 100, std::uint64_t seed = 0,
                     const RangeOverrides& ranges = {}, double noise_std = 0.0);

/// Header: column names then `target`. Values use 17 significant digits.
std::string to_csv(const Dataset& data);
Dataset parse_csv(std::string_view text);
void csv_write(const Dataset& data, const std::filesystem::path& path);
Dataset csv_read(const std::filesystem::path& path);

}  // namespace share
