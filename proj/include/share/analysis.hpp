#pragma once

// Reading numbers off fitted shape functions: dense sampling, splitting a
// curve into linear pieces and plateaus, line fits and SVG plots.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "share/datasets.hpp"
#include "share/evaluator.hpp"

namespace share {

struct ShapeTrace {
  std::size_t shape_id = 0;
  std::vector<double> xs;  // raw inputs, strictly increasing
  std::vector<double> ys;
  std::pair<double, double> input_range{0.0, 0.0};
};

/// Uniform grid of `n_points` over the shape's recorded input range, evaluated in eval mode.
ShapeTrace sample_shape(const CompiledModel& model, std::size_t shape_id, std::size_t n_points);

enum class SegmentKind { Rising, Plateau, Falling };

char segment_letter(SegmentKind kind);

struct Segment {
  SegmentKind kind = SegmentKind::Plateau;
  double x_start = 0.0;
  double x_end = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  double level = 0.0;  // mean of the interior points
  std::size_t first_point = 0;
  std::size_t last_point = 0;

  double width() const { return x_end - x_start; }
};

struct SegmentDecomposition {
  std::vector<Segment> segments;

  /// Letters R, P, F in order, e.g. "RPRPR".
  std::string pattern() const;
};

struct SegmentOptions {
  double plateau_slope_threshold = 0.1;
  std::size_t min_segment_width = 5;  // grid intervals
};

SegmentDecomposition detect_segments(const ShapeTrace& trace, const SegmentOptions& opts = {});

struct WaterPropertyEstimate {
  double c_ice = 0.0;
  double c_water = 0.0;
  double c_steam = 0.0;
  double L_fusion = 0.0;
  double L_vapor = 0.0;
};

/// Needs the pattern R,P,R,P,R with the x axis in cal/g and y in degC.
WaterPropertyEstimate extract_water_properties(const SegmentDecomposition& dec);

/// Temperature against energy per gram shifted by c_ice * t0; kinks at -50, 0, L_fusion, ...
ShapeTrace heating_curve_trace(const WaterConstants& k, double u_lo, double u_hi, std::size_t n_points);

/// Knots of the same curve, for building a piecewise-linear shape.
std::pair<std::vector<double>, std::vector<double>> heating_curve_knots(const WaterConstants& k, double u_lo,
                                                                        double u_hi);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_abs_residual = 0.0;
};

LineFit fit_line(std::span<const double> xs, std::span<const double> ys);
inline LineFit fit_line(const ShapeTrace& trace) { return fit_line(trace.xs, trace.ys); }

std::string render_svg(const std::vector<ShapeTrace>& traces, const std::vector<std::string>& labels);
void plot_svg(const std::vector<ShapeTrace>& traces, const std::vector<std::string>& labels,
              const std::filesystem::path& path);

/// Two columns, x and y.
std::string trace_csv(const ShapeTrace& trace);

}  // namespace share
