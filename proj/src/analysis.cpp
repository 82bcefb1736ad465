#include "share/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "share/error.hpp"
#include "share/io.hpp"

namespace share {

ShapeTrace sample_shape(const CompiledModel& model, std::size_t shape_id, std::size_t n_points) {
  if (shape_id >= model.shapes.size()) {
    throw Error(ErrorCode::UnknownShape,
                fmt::format("model has {} shape(s); s{} does not exist", model.shapes.size(), shape_id + 1));
  }
  if (n_points < 2) throw Error(ErrorCode::InvalidArgument, "need at least two sample points");
  const ShapeSlot& slot = model.shapes[shape_id];
  if (!slot.input_range) throw Error(ErrorCode::InvalidArgument, "shape has no recorded input range");
  const auto [lo, hi] = *slot.input_range;
  if (!(hi > lo)) throw Error(ErrorCode::InvalidArgument, "shape input range is empty");

  ShapeTrace t;
  t.shape_id = shape_id;
  t.input_range = *slot.input_range;
  const double step = (hi - lo) / static_cast<double>(n_points - 1);
  Eigen::ArrayXd z(static_cast<Eigen::Index>(n_points));
  for (std::size_t i = 0; i < n_points; ++i) z[static_cast<Eigen::Index>(i)] = lo + step * static_cast<double>(i);
  z[static_cast<Eigen::Index>(n_points - 1)] = hi;
  const Eigen::ArrayXd y = slot.eval(z);
  t.xs.assign(z.data(), z.data() + z.size());
  t.ys.assign(y.data(), y.data() + y.size());
  return t;
}

char segment_letter(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Rising: return 'R';
    case SegmentKind::Plateau: return 'P';
    case SegmentKind::Falling: return 'F';
  }
  return '?';
}

std::string SegmentDecomposition::pattern() const {
  std::string s;
  for (const Segment& seg : segments) s += segment_letter(seg.kind);
  return s;
}

LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "line fit needs two or more paired points");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorCode::InvalidArgument, "line fit needs distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    f.max_abs_residual = std::max(f.max_abs_residual, std::fabs(ys[i] - (f.slope * xs[i] + f.intercept)));
  }
  return f;
}

namespace {

struct Run {
  SegmentKind kind;
  std::size_t a;  // first interval
  std::size_t b;  // last interval (inclusive)
  std::size_t len() const { return b - a + 1; }
};

void coalesce(std::vector<Run>& runs) {
  std::vector<Run> out;
  for (const Run& r : runs) {
    if (!out.empty() && out.back().kind == r.kind) {
      out.back().b = r.b;
    } else {
      out.push_back(r);
    }
  }
  runs = std::move(out);
}

}  // namespace

SegmentDecomposition detect_segments(const ShapeTrace& trace, const SegmentOptions& opts) {
  const std::size_t n = trace.xs.size();
  if (trace.ys.size() != n) throw Error(ErrorCode::InvalidArgument, "trace xs and ys differ in length");
  if (n < 2 || n < opts.min_segment_width + 1) {
    throw Error(ErrorCode::NoSegments, fmt::format("trace has {} points, fewer than the minimum segment", n));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(trace.xs[i + 1] > trace.xs[i])) throw Error(ErrorCode::InvalidArgument, "trace xs must increase");
  }

  std::vector<Run> runs;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double s = (trace.ys[i + 1] - trace.ys[i]) / (trace.xs[i + 1] - trace.xs[i]);
    SegmentKind kind = SegmentKind::Plateau;
    if (s > opts.plateau_slope_threshold) kind = SegmentKind::Rising;
    if (s < -opts.plateau_slope_threshold) kind = SegmentKind::Falling;
    runs.push_back({kind, i, i});
  }
  coalesce(runs);

  // Fold short runs into their longer neighbour, shortest first.
  for (;;) {
    if (runs.size() <= 1) break;
    std::size_t victim = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (runs[i].len() < opts.min_segment_width && (victim == runs.size() || runs[i].len() < runs[victim].len())) {
        victim = i;
      }
    }
    if (victim == runs.size()) break;
    const bool has_left = victim > 0;
    const bool has_right = victim + 1 < runs.size();
    const bool to_left = has_left && (!has_right || runs[victim - 1].len() >= runs[victim + 1].len());
    if (to_left) {
      runs[victim - 1].b = runs[victim].b;
    } else {
      runs[victim + 1].a = runs[victim].a;
    }
    runs.erase(runs.begin() + static_cast<long>(victim));
    coalesce(runs);
  }

  SegmentDecomposition dec;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    Segment seg;
    seg.kind = runs[r].kind;
    seg.first_point = runs[r].a;
    seg.last_point = runs[r].b + 1;
    // Points next to a neighbouring segment may sit past the kink.
    const std::size_t pts = seg.last_point - seg.first_point + 1;
    const std::size_t trim = std::max<std::size_t>(1, pts / 10);
    std::size_t lo = seg.first_point;
    std::size_t hi = seg.last_point;
    if (r > 0 && hi - lo + 1 > trim + 2) lo += trim;
    if (r + 1 < runs.size() && hi - lo + 1 > trim + 2) hi -= trim;
    const std::span<const double> xs(trace.xs.data() + lo, hi - lo + 1);
    const std::span<const double> ys(trace.ys.data() + lo, hi - lo + 1);
    const LineFit fit = fit_line(xs, ys);
    seg.slope = fit.slope;
    seg.intercept = fit.intercept;
    double sum = 0.0;
    for (double y : ys) sum += y;
    seg.level = sum / static_cast<double>(ys.size());
    dec.segments.push_back(seg);
  }

  // Boundaries sit where neighbouring fitted lines cross.
  dec.segments.front().x_start = trace.xs.front();
  dec.segments.back().x_end = trace.xs.back();
  for (std::size_t i = 0; i + 1 < dec.segments.size(); ++i) {
    Segment& left = dec.segments[i];
    Segment& right = dec.segments[i + 1];
    double x = trace.xs[left.last_point];
    const double dm = left.slope - right.slope;
    if (std::fabs(dm) > 1e-12) {
      const double cross = (right.intercept - left.intercept) / dm;
      if (cross >= trace.xs[left.first_point] && cross <= trace.xs[right.last_point]) x = cross;
    }
    left.x_end = x;
    right.x_start = x;
  }
  return dec;
}

WaterPropertyEstimate extract_water_properties(const SegmentDecomposition& dec) {
  const std::string pattern = dec.pattern();
  if (pattern != "RPRPR") {
    throw Error(ErrorCode::PatternMismatch, fmt::format("expected segment pattern RPRPR, found {}",
                                                        pattern.empty() ? "(none)" : pattern));
  }
  const auto& s = dec.segments;
  WaterPropertyEstimate w;
  w.c_ice = 1.0 / s[0].slope;
  w.L_fusion = s[1].width();
  w.c_water = 1.0 / s[2].slope;
  w.L_vapor = s[3].width();
  w.c_steam = 1.0 / s[4].slope;
  return w;
}

std::pair<std::vector<double>, std::vector<double>> heating_curve_knots(const WaterConstants& k, double u_lo,
                                                                        double u_hi) {
  const double melt_end = k.L_fusion;
  const double boil_start = melt_end + 100.0 * k.c_water;
  const double boil_end = boil_start + k.L_vapor;
  if (!(u_lo < 0.0 && u_hi > boil_end)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("range must cover (0, {})", boil_end));
  }
  std::vector<double> xs{u_lo, 0.0, melt_end, boil_start, boil_end, u_hi};
  std::vector<double> ys{u_lo / k.c_ice, 0.0, 0.0, 100.0, 100.0, 100.0 + (u_hi - boil_end) / k.c_steam};
  return {xs, ys};
}

ShapeTrace heating_curve_trace(const WaterConstants& k, double u_lo, double u_hi, std::size_t n_points) {
  if (n_points < 2) throw Error(ErrorCode::InvalidArgument, "need at least two sample points");
  const auto [kx, ky] = heating_curve_knots(k, u_lo, u_hi);
  ShapeTrace t;
  t.input_range = {u_lo, u_hi};
  const double step = (u_hi - u_lo) / static_cast<double>(n_points - 1);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double x = i + 1 == n_points ? u_hi : u_lo + step * static_cast<double>(i);
    std::size_t j = static_cast<std::size_t>(std::upper_bound(kx.begin(), kx.end(), x) - kx.begin());
    j = std::clamp<std::size_t>(j, 1, kx.size() - 1);
    // Evaluate each piece from its own formula so plateaus are exactly flat.
    double y;
    if (j == 1) {
      y = x / k.c_ice;
    } else if (j == 2) {
      y = 0.0;
    } else if (j == 3) {
      y = (x - kx[2]) / k.c_water;
    } else if (j == 4) {
      y = 100.0;
    } else {
      y = 100.0 + (x - kx[4]) / k.c_steam;
    }
    t.xs.push_back(x);
    t.ys.push_back(y);
  }
  return t;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::string render_svg(const std::vector<ShapeTrace>& traces, const std::vector<std::string>& labels) {
  if (traces.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to plot");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const ShapeTrace& t : traces) {
    if (t.xs.size() != t.ys.size() || t.xs.empty()) throw Error(ErrorCode::InvalidArgument, "malformed trace");
    for (std::size_t i = 0; i < t.xs.size(); ++i) {
      x0 = std::min(x0, t.xs[i]);
      x1 = std::max(x1, t.xs[i]);
      y0 = std::min(y0, t.ys[i]);
      y1 = std::max(y1, t.ys[i]);
    }
  }
  if (!(x1 > x0)) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double W = 640, H = 420, left = 70, right = 20, top = 20, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" "
                   "viewBox=\"0 0 {} {}\">\n", W, H, W, H);
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", left, top + ph,
                   left + pw, top + ph);
  s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", left, top, left,
                   top + ph);
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = x0 + (x1 - x0) * i / ticks;
    const double fy = y0 + (y1 - y0) * i / ticks;
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>\n", px(fx),
                     top + ph, top + ph + 5);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"11\" text-anchor=\"middle\">{:.4g}</text>\n", px(fx),
                     top + ph + 18, fx);
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"black\"/>\n", left - 5,
                     py(fy), left);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"11\" text-anchor=\"end\">{:.4g}</text>\n", left - 8,
                     py(fy) + 4, fy);
  }
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const ShapeTrace& t = traces[k];
    const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"", color);
    for (std::size_t i = 0; i < t.xs.size(); ++i) {
      if (i) s += ' ';
      s += fmt::format("{:.2f},{:.2f}", px(t.xs[i]), py(t.ys[i]));
    }
    s += "\"/>\n";
    const std::string label = k < labels.size() ? labels[k] : fmt::format("s{}", t.shape_id + 1);
    const double ly = top + 14 + 16 * static_cast<double>(k);
    s += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                     left + pw - 120, ly - 4, left + pw - 100, ly - 4, color);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"12\">{}</text>\n", left + pw - 95, ly,
                     xml_escape(label));
  }
  s += "</svg>\n";
  return s;
}

void plot_svg(const std::vector<ShapeTrace>& traces, const std::vector<std::string>& labels,
              const std::filesystem::path& path) {
  write_file_atomic(path, render_svg(traces, labels));
}

std::string trace_csv(const ShapeTrace& trace) {
  std::string out = "x,y\n";
  for (std::size_t i = 0; i < trace.xs.size(); ++i) out += fmt::format("{:.17g},{:.17g}\n", trace.xs[i], trace.ys[i]);
  return out;
}

}  // namespace share
