#include "share/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "share/analysis.hpp"
#include "share/closedform.hpp"
#include "share/config.hpp"
#include "share/datasets.hpp"
#include "share/error.hpp"
#include "share/evaluator.hpp"
#include "share/gp.hpp"
#include "share/io.hpp"
#include "share/model_io.hpp"
#include "share/parser.hpp"

namespace share {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitAnalysis = 3;
constexpr int kExitTraining = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::PatternMismatch:
    case ErrorCode::NoSegments:
    case ErrorCode::UnknownShape:
      return kExitAnalysis;
    case ErrorCode::TrainingDiverged:
    case ErrorCode::NonFiniteOutput:
    case ErrorCode::NonFiniteGradient:
      return kExitTraining;
    default:
      return kExitInput;
  }
}

class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = json::array();
    for (int i = 0; i < argc; ++i) j_["argv"].push_back(argv[i]);
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
    j_["seeds"] = json::object();
  }

  void input(const fs::path& p) { j_["inputs"][p.string()] = sha256_file(p); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
  void seed(const std::string& name, std::uint64_t v) { j_["seeds"][name] = v; }
  void config(const SearchConfig& cfg) { j_["config"] = config_snapshot(cfg); }
  json& extra() { return j_; }

  void write(const fs::path& path) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["wall_clock_seconds"] = secs;
    write_file_atomic(path, j_.dump(2) + "\n");
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

fs::path sibling_manifest(const fs::path& out) {
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, fmt::format("cannot create directory '{}'", dir.string()));
}

std::string fmt_real(double v) { return fmt::format("{:.17g}", v); }

// ---- gen ----

struct GenArgs {
  std::string dataset;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double noise = 0.0;
  std::string out;
  std::vector<std::string> ranges;
};

Dataset generate(const GenArgs& a) {
  if (a.dataset == "temperature") return gen_temperature(a.n ? a.n : 2000, a.seed, a.noise);
  if (a.dataset == "risk_scores") return gen_risk_scores(a.n ? a.n : 200, a.seed, a.noise);
  if (a.dataset.rfind("eq:", 0) == 0) {
    RangeOverrides overrides;
    for (const std::string& r : a.ranges) {
      const std::size_t eq = r.find('=');
      const std::size_t colon = r.find(':', eq == std::string::npos ? 0 : eq);
      if (eq == std::string::npos || colon == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("range '{}' must look like name=lo:hi", r));
      }
      try {
        overrides[r.substr(0, eq)] = {std::stod(r.substr(eq + 1, colon - eq - 1)), std::stod(r.substr(colon + 1))};
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("range '{}' has non-numeric bounds", r));
      }
    }
    return gen_equation(a.dataset.substr(3), a.n ? a.n : 100, a.seed, overrides, a.noise);
  }
  throw Error(ErrorCode::UnknownDataset,
              fmt::format("unknown dataset '{}' (temperature, risk_scores, eq:<id>)", a.dataset));
}

int cmd_gen(const GenArgs& a, int argc, char** argv) {
  if (!a.ranges.empty() && a.dataset.rfind("eq:", 0) != 0) {
    throw Error(ErrorCode::InvalidArgument, "--range applies to eq:<id> datasets only");
  }
  Manifest m("gen", argc, argv);
  const Dataset d = generate(a);
  const fs::path out(a.out);
  csv_write(d, out);
  m.seed("data", a.seed);
  m.output(out);
  m.extra()["dataset"] = a.dataset;
  m.extra()["rows"] = d.rows();
  m.extra()["noise_std"] = a.noise;
  m.write(sibling_manifest(out));
  std::cout << fmt::format("wrote {} rows to {}\n", d.rows(), out.string());
  return 0;
}

// ---- shared by fit and fit-fixed ----

struct ConfigArgs {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
};

SearchConfig load_run_config(const ConfigArgs& a) {
  SearchConfig cfg;
  if (!a.preset.empty()) apply_preset(cfg, a.preset);
  if (!a.config_path.empty()) apply_config_file(cfg, a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  return cfg;
}

std::vector<ShapeTrace> all_traces(const CompiledModel& model, std::size_t n_points) {
  std::vector<ShapeTrace> traces;
  for (std::size_t k = 0; k < model.shapes.size(); ++k) traces.push_back(sample_shape(model, k, n_points));
  return traces;
}

std::vector<std::string> shape_labels(const CompiledModel& model) {
  // Label each shape by the argument it is applied to.
  std::vector<std::string> labels(model.shapes.size());
  for (const Node* n : preorder(model.tree.root)) {
    if (n->kind == NodeKind::Shape) {
      labels[n->shape_id] = fmt::format("s{}({})", n->shape_id + 1, render(n->children[0], model.tree.var_names));
    }
  }
  return labels;
}

constexpr const char* kFrontierHeader = "shape_count,expression,val_r2,val_mse,size,depth\n";

std::string frontier_row(std::size_t count, const std::string& expr, double r2, double mse, std::size_t size,
                         std::size_t depth) {
  return fmt::format("{},\"{}\",{},{},{},{}\n", count, expr, fmt_real(r2), fmt_real(mse), size, depth);
}

// ---- fit ----

struct FitArgs {
  std::string data;
  std::string out_dir;
  std::size_t threads = 0;
  ConfigArgs cfg;
};

int cmd_fit(const FitArgs& a, int argc, char** argv) {
  Manifest m("fit", argc, argv);
  const Dataset data = csv_read(a.data);
  m.input(a.data);
  if (!a.cfg.config_path.empty()) m.input(a.cfg.config_path);
  SearchConfig cfg = load_run_config(a.cfg);
  cfg.threads = a.threads;
  const fs::path out(a.out_dir);
  ensure_dir(out);

  const SearchResult res = evolve(data, cfg, [](const GenerationStats& s) {
    std::cerr << fmt::format("generation {}: {} new trainings, cache {}, best fitness {:.6g} {}\n", s.generation,
                             s.new_trainings, s.cache_size, s.best_fitness, s.best_key);
  });

  std::string csv = kFrontierHeader;
  json frontier = json::array();
  for (const auto& [count, p] : res.frontier.rows) {
    csv += frontier_row(count, p.canonical_key, p.val_r2, p.val_mse, p.size, p.depth);
    const fs::path model_path = out / fmt::format("model_s{}.json", count);
    save_model(*p.fitted, model_path);
    m.output(model_path);
    if (count > 0) {
      const fs::path svg = out / fmt::format("shapes_s{}.svg", count);
      plot_svg(all_traces(*p.fitted, 200), shape_labels(*p.fitted), svg);
      m.output(svg);
    }
    frontier.push_back({{"shape_count", count},
                        {"expression", p.canonical_key},
                        {"val_r2", p.val_r2},
                        {"val_mse", p.val_mse},
                        {"train_seed", p.train_seed}});
  }
  write_file_atomic(out / "frontier.csv", csv);
  m.output(out / "frontier.csv");

  json run;
  run["config"] = config_snapshot(cfg);
  run["seed"] = cfg.seed;
  run["data"] = {{"path", a.data}, {"sha256", sha256_file(a.data)}, {"rows", data.rows()},
                 {"train_rows", data.n_train}, {"columns", data.column_names}};
  run["n_trainings"] = res.n_trainings;
  run["n_failed"] = std::count_if(res.evaluated.begin(), res.evaluated.end(),
                                  [](const ScoredProgram& p) { return p.failed(); });
  run["generations"] = json::array();
  for (const GenerationStats& s : res.generations) {
    run["generations"].push_back({{"generation", s.generation},
                                  {"new_trainings", s.new_trainings},
                                  {"cache_size", s.cache_size},
                                  {"best_fitness", s.best_fitness},
                                  {"best_expression", s.best_key}});
  }
  run["frontier"] = frontier;
  write_file_atomic(out / "run.json", run.dump(2) + "\n");
  m.output(out / "run.json");

  m.config(cfg);
  m.seed("search", cfg.seed);
  m.write(out / "manifest.json");
  std::cout << csv;
  return 0;
}

// ---- fit-fixed ----

struct FitFixedArgs {
  std::string data;
  std::string expression;
  std::string out_dir;
  std::size_t restarts = 1;
  ConfigArgs cfg;
};

int cmd_fit_fixed(const FitFixedArgs& a, int argc, char** argv) {
  Manifest m("fit-fixed", argc, argv);
  // Structure errors are reported before any data is touched.
  const ExprTree loose = parse_expression(a.expression);
  const TransparencyVerdict verdict = validate_transparent(loose);
  if (!verdict.is_transparent) {
    std::string msg = "expression is not transparent:";
    for (const Violation& v : verdict.violations) msg += " " + describe(v, loose);
    throw Error(ErrorCode::ValidationFailed, msg);
  }
  const Dataset data = csv_read(a.data);
  m.input(a.data);
  if (!a.cfg.config_path.empty()) m.input(a.cfg.config_path);
  const SearchConfig cfg = load_run_config(a.cfg);
  ParseOptions opts;
  opts.known_vars = data.column_names;
  const ExprTree tree = parse_expression(a.expression, opts);
  if (a.restarts < 1) throw Error(ErrorCode::InvalidArgument, "--restarts must be at least 1");

  std::optional<TrainResult> best;
  std::uint64_t best_seed = 0;
  json attempts = json::array();
  for (std::size_t r = 0; r < a.restarts; ++r) {
    const std::uint64_t seed = cfg.seed + r;
    TrainConfig inner = cfg.inner;
    inner.seed = seed;
    try {
      TrainResult res =
          train(compile(tree, seed, cfg.compile), data.X_train(), data.y_train(), data.X_val(), data.y_val(), inner);
      attempts.push_back({{"seed", seed}, {"val_r2", res.val_r2}, {"val_mse", res.val_mse}});
      std::cerr << fmt::format("restart {} (seed {}): val R2 {:.6f}\n", r + 1, seed, res.val_r2);
      if (!best || res.val_r2 > best->val_r2) {
        best = std::move(res);
        best_seed = seed;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TrainingDiverged) throw;
      attempts.push_back({{"seed", seed}, {"error", e.what()}});
      std::cerr << fmt::format("restart {} (seed {}): {}\n", r + 1, seed, e.what());
    }
  }
  if (!best) throw Error(ErrorCode::TrainingDiverged, "every restart diverged");

  const fs::path out(a.out_dir);
  ensure_dir(out);
  save_model(best->model, out / "model.json");
  m.output(out / "model.json");
  json metrics;
  metrics["expression"] = render(best->model.tree);
  metrics["val_r2"] = best->val_r2;
  metrics["val_mse"] = best->val_mse;
  metrics["learning_rate"] = best->learning_rate;
  metrics["epochs_run"] = best->epochs_run;
  metrics["best_epoch"] = best->best_epoch;
  metrics["seed"] = best_seed;
  metrics["attempts"] = attempts;
  write_file_atomic(out / "metrics.json", metrics.dump(2) + "\n");
  m.output(out / "metrics.json");
  const StructuralMetrics sm = structural_metrics(best->model.tree);
  write_file_atomic(out / "frontier.csv", kFrontierHeader + frontier_row(sm.n_shapes, render(best->model.tree),
                                                                          best->val_r2, best->val_mse, sm.size,
                                                                          sm.depth));
  m.output(out / "frontier.csv");
  if (!best->model.shapes.empty()) {
    const std::vector<ShapeTrace> traces = all_traces(best->model, 200);
    plot_svg(traces, shape_labels(best->model), out / "shapes.svg");
    m.output(out / "shapes.svg");
    for (const ShapeTrace& t : traces) {
      const fs::path p = out / fmt::format("trace_s{}.csv", t.shape_id + 1);
      write_file_atomic(p, trace_csv(t));
      m.output(p);
    }
  }
  m.config(cfg);
  m.seed("train", best_seed);
  m.write(out / "manifest.json");
  std::cout << fmt::format("{}\nval R2 {:.6f}  val MSE {:.6g}\n", render(best->model.tree), best->val_r2,
                           best->val_mse);
  return 0;
}

// ---- check ----

struct CheckArgs {
  std::string input;
  std::string out;
  std::size_t max_substitutions = 2;
};

std::string bundled_corpus() {
  std::string text;
  for (const EquationSpec& e : equation_registry()) text += e.id + " :: " + e.formula + "\n";
  return text;
}

int cmd_check(const CheckArgs& a, int argc, char** argv) {
  Manifest m("check", argc, argv);
  std::vector<CorpusLine> corpus;
  if (a.input.empty()) {
    corpus = parse_corpus(bundled_corpus());
  } else if (fs::is_regular_file(a.input)) {
    corpus = parse_corpus(read_file(a.input));
    m.input(a.input);
  } else {
    corpus.push_back({"inline", a.input, 0});
  }
  const CensusReport report = census(corpus, a.max_substitutions);
  const std::string csv = census_csv(report);
  for (const CensusEntry& e : report.entries) {
    if (!e.error.empty()) std::cerr << fmt::format("{}: {}\n", e.name, e.error);
  }
  if (!a.out.empty()) {
    write_file_atomic(a.out, csv);
    m.output(a.out);
    m.extra()["n_total"] = report.n_total;
    m.extra()["n_direct"] = report.n_direct;
    m.extra()["n_after_rewrites"] = report.n_after_rewrites;
    m.write(sibling_manifest(a.out));
  }
  std::cout << csv;
  std::cerr << fmt::format("{} equations: {} transparent directly, {} after rewrites\n", report.n_total,
                           report.n_direct, report.n_after_rewrites);
  return 0;
}

// ---- extract ----

struct ExtractArgs {
  std::string model;
  std::size_t shape = 1;
  std::string out;
  std::size_t points = 1000;
  double threshold = 0.1;
  std::size_t min_width = 5;
};

int cmd_extract(const ExtractArgs& a, int argc, char** argv) {
  Manifest m("extract", argc, argv);
  const CompiledModel model = load_model(a.model);
  m.input(a.model);
  if (a.shape == 0) throw Error(ErrorCode::UnknownShape, "shapes are numbered from 1");
  const ShapeTrace trace = sample_shape(model, a.shape - 1, a.points);
  const SegmentDecomposition dec = detect_segments(trace, {a.threshold, a.min_width});

  json report;
  report["model"] = a.model;
  report["shape"] = fmt::format("s{}", a.shape);
  report["pattern"] = dec.pattern();
  report["segments"] = json::array();
  for (const Segment& s : dec.segments) {
    report["segments"].push_back({{"kind", std::string(1, segment_letter(s.kind))},
                                  {"x_start", s.x_start},
                                  {"x_end", s.x_end},
                                  {"slope", s.slope},
                                  {"level", s.level}});
  }
  WaterPropertyEstimate est;
  try {
    est = extract_water_properties(dec);
  } catch (const Error&) {
    for (const Segment& s : dec.segments) {
      std::cerr << fmt::format("  {} [{:.4g}, {:.4g}] slope {:.4g}\n", segment_letter(s.kind), s.x_start, s.x_end,
                               s.slope);
    }
    throw;
  }
  const WaterConstants truth;
  const std::vector<std::tuple<std::string, double, double>> rows = {
      {"c_ice", est.c_ice, truth.c_ice},          {"c_water", est.c_water, truth.c_water},
      {"c_steam", est.c_steam, truth.c_steam},    {"L_fusion", est.L_fusion, truth.L_fusion},
      {"L_vapor", est.L_vapor, truth.L_vapor},
  };
  std::string table = "property,estimate,ground_truth,relative_error\n";
  for (const auto& [name, value, gt] : rows) {
    const double rel = (value - gt) / gt;
    report["properties"][name] = {{"estimate", value}, {"ground_truth", gt}, {"relative_error", rel}};
    table += fmt::format("{},{:.6g},{:.6g},{:+.4f}\n", name, value, gt, rel);
  }
  const fs::path out(a.out);
  write_file_atomic(out, report.dump(2) + "\n");
  m.output(out);
  m.write(sibling_manifest(out));
  std::cout << table;
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Shape arithmetic expressions: generate data, search, fit, check and extract"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset as CSV");
  g->add_option("dataset", gen.dataset, "temperature, risk_scores or eq:<id>")->required();
  g->add_option("--n", gen.n, "Rows (default 2000 / 200 / 100)");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--noise", gen.noise, "Gaussian label noise standard deviation");
  g->add_option("--range", gen.ranges, "Override a sampling range, name=lo:hi (eq:<id> only)");
  g->add_option("--out", gen.out, "Output CSV path")->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Search expression structures and report the best per shape count");
  f->add_option("data", fit.data, "CSV with a trailing target column")->required();
  f->add_option("--config", fit.cfg.config_path, "Config file");
  f->add_option("--preset", fit.cfg.preset, "paper-main or paper-appendix");
  f->add_option("--seed", fit.cfg.seed, "Override the search seed");
  f->add_option("--threads", fit.threads, "Worker threads (0 = all cores)");
  f->add_option("--out-dir", fit.out_dir, "Output directory")->required();

  FitFixedArgs ff;
  auto* x = app.add_subcommand("fit-fixed", "Train the shapes of one given expression");
  x->add_option("data", ff.data, "CSV with a trailing target column")->required();
  x->add_option("expression", ff.expression, "Expression with shapes written s1(...), s2(...)")->required();
  x->add_option("--config", ff.cfg.config_path, "Config file");
  x->add_option("--preset", ff.cfg.preset, "paper-main or paper-appendix");
  x->add_option("--seed", ff.cfg.seed, "Initialization seed");
  x->add_option("--restarts", ff.restarts, "Seeds to try (seed, seed+1, ...); the best validation R2 is kept");
  x->add_option("--out-dir", ff.out_dir, "Output directory")->required();

  CheckArgs chk;
  auto* c = app.add_subcommand("check", "Decide whether closed-form equations are transparent expressions");
  c->add_option("input", chk.input, "Corpus file (name :: expr per line) or one inline expression; "
                                    "omitted = bundled equations");
  c->add_option("--max-substitutions", chk.max_substitutions, "Substitution budget");
  c->add_option("--out", chk.out, "Verdict CSV path");

  ExtractArgs ex;
  auto* e = app.add_subcommand("extract", "Read water properties off a fitted heating-curve shape");
  e->add_option("model", ex.model, "Model JSON")->required();
  e->add_option("--shape", ex.shape, "Shape number (1-based)");
  e->add_option("--points", ex.points, "Sample points");
  e->add_option("--threshold", ex.threshold, "Plateau slope threshold");
  e->add_option("--min-width", ex.min_width, "Minimum segment width in grid intervals");
  e->add_option("--out", ex.out, "Report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*g) return cmd_gen(gen, argc, argv);
    if (*f) return cmd_fit(fit, argc, argv);
    if (*x) return cmd_fit_fixed(ff, argc, argv);
    if (*c) return cmd_check(chk, argc, argv);
    if (*e) return cmd_extract(ex, argc, argv);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err.code());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace share
