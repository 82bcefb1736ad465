#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <json.hpp>

#include "share/analysis.hpp"
#include "share/cli.hpp"
#include "share/config.hpp"
#include "share/datasets.hpp"
#include "share/error.hpp"
#include "share/io.hpp"
#include "share/model_io.hpp"
#include "share/parser.hpp"

using namespace share;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "share");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("share_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("gen") {
  TempDir dir;
  CHECK(run({"gen", "temperature", "--n", "2000", "--seed", "1", "--out", dir / "t.csv"}) == 0);
  const Dataset t = csv_read(dir / "t.csv");
  CHECK(t.rows() == 2000);
  CHECK(t.column_names == std::vector<std::string>{"E", "m", "t0"});
  CHECK(t == gen_temperature(2000, 1));
  const auto manifest = nlohmann::json::parse(read_file(dir / "t.csv.manifest.json"));
  CHECK(manifest["command"] == "gen");
  CHECK(manifest["seeds"]["data"] == 1);

  CHECK(run({"gen", "risk_scores", "--n", "200", "--seed", "7", "--out", dir / "r.csv"}) == 0);
  CHECK(csv_read(dir / "r.csv").rows() == 200);

  CHECK(run({"gen", "eq:I.18.12", "--n", "10", "--range", "r=2:3", "--out", dir / "e.csv"}) == 0);
  const Dataset e = csv_read(dir / "e.csv");
  CHECK(e.X.col(0).minCoeff() >= 2.0);
  CHECK(e.X.col(0).maxCoeff() <= 3.0);

  CHECK(run({"gen", "weather", "--out", dir / "w.csv"}) == 2);
  CHECK(run({"gen", "eq:I.99", "--out", dir / "w.csv"}) == 2);
  CHECK(run({"gen", "temperature", "--n", "3", "--out", dir / "w.csv"}) == 2);
  CHECK(run({"gen", "temperature"}) == 2);
  CHECK(run({"frobnicate"}) == 2);
}

TEST_CASE("fit-fixed") {
  TempDir dir;
  REQUIRE(run({"gen", "eq:I.18.12", "--n", "100", "--seed", "0", "--out", dir / "tq.csv"}) == 0);
  write_file_atomic(dir / "quick.ini", "[optimization]\nmax_epochs = 150\n");
  CHECK(run({"fit-fixed", dir / "tq.csv", "r*F*s1(theta)", "--config", dir / "quick.ini", "--out-dir", dir / "a"}) == 0);
  CHECK(run({"fit-fixed", dir / "tq.csv", "r*F*s1(theta)", "--config", dir / "quick.ini", "--out-dir", dir / "b"}) == 0);
  for (const char* f : {"model.json", "metrics.json", "frontier.csv", "shapes.svg", "trace_s1.csv", "manifest.json"}) {
    CHECK(fs::exists(fs::path(dir / "a") / f));
  }
  CHECK(read_file(dir / "a/model.json") == read_file(dir / "b/model.json"));
  CHECK(read_file(dir / "a/frontier.csv") == read_file(dir / "b/frontier.csv"));
  CHECK(read_file(dir / "a/shapes.svg") == read_file(dir / "b/shapes.svg"));
  const auto metrics = nlohmann::json::parse(read_file(dir / "a/metrics.json"));
  CHECK(metrics["val_r2"].get<double>() > 0.9);

  CHECK(run({"fit-fixed", dir / "tq.csv", "s1(s2(r))", "--out-dir", dir / "c"}) == 2);
  CHECK(run({"fit-fixed", dir / "tq.csv", "r + 2", "--out-dir", dir / "c"}) == 2);
  CHECK(run({"fit-fixed", dir / "tq.csv", "s1(q)", "--out-dir", dir / "c"}) == 2);
  CHECK(run({"fit-fixed", dir / "tq.csv", "r*F*s1(theta)", "--preset", "huge", "--out-dir", dir / "c"}) == 2);

  // A model without shapes cannot be analysed.
  CHECK(run({"fit-fixed", dir / "tq.csv", "r*F", "--out-dir", dir / "plain"}) == 0);
  CHECK(run({"extract", dir / "plain/model.json", "--shape", "1", "--out", dir / "x.json"}) == 3);
  // The torque shape is a single hump, not a heating curve.
  CHECK(run({"extract", dir / "a/model.json", "--shape", "1", "--out", dir / "x.json"}) == 3);
}

TEST_CASE("fit writes a frontier") {
  TempDir dir;
  REQUIRE(run({"gen", "eq:I.18.12", "--n", "60", "--seed", "2", "--out", dir / "tq.csv"}) == 0);
  write_file_atomic(dir / "small.ini",
                    "[search]\npopulation_size = 12\ngenerations = 2\n[optimization]\nmax_epochs = 20\n");
  CHECK(run({"fit", dir / "tq.csv", "--config", dir / "small.ini", "--seed", "4", "--out-dir", dir / "run"}) == 0);
  const std::string frontier = read_file(dir / "run/frontier.csv");
  CHECK(frontier.rfind("shape_count,expression,val_r2,val_mse,size,depth\n", 0) == 0);
  const auto run_json = nlohmann::json::parse(read_file(dir / "run/run.json"));
  CHECK(run_json["seed"] == 4);
  CHECK(run_json["config"]["search"]["population_size"] == "12");
  for (const auto& row : run_json["frontier"]) {
    const std::size_t k = row["shape_count"];
    CHECK(fs::exists(fs::path(dir / "run") / ("model_s" + std::to_string(k) + ".json")));
    if (k > 0) CHECK(fs::exists(fs::path(dir / "run") / ("shapes_s" + std::to_string(k) + ".svg")));
  }

  write_file_atomic(dir / "bad.csv", "r,F,theta,target\n1,2,3,4\n1,2,x,4\n");
  CHECK(run({"fit", dir / "bad.csv", "--out-dir", dir / "bad"}) == 2);
  write_file_atomic(dir / "bad.ini", "[search]\npopulation = 3\n");
  CHECK(run({"fit", dir / "tq.csv", "--config", dir / "bad.ini", "--out-dir", dir / "bad"}) == 2);
}

TEST_CASE("check") {
  TempDir dir;
  CHECK(run({"check", "--out", dir / "all.csv"}) == 0);
  const std::string all = read_file(dir / "all.csv");
  CHECK(all.find("I.18.12,true,true,") != std::string::npos);
  CHECK(all.find("I.34.14,false,true,u1=v / c,") != std::string::npos);

  CHECK(run({"check", "r*F*sin(theta)", "--out", dir / "one.csv"}) == 0);
  CHECK(read_file(dir / "one.csv").find("inline,true,true,,1,6,6,10") != std::string::npos);

  write_file_atomic(dir / "empty.txt", "");
  CHECK(run({"check", dir / "empty.txt", "--out", dir / "empty.csv"}) == 0);
  const std::string empty = read_file(dir / "empty.csv");
  CHECK(std::count(empty.begin(), empty.end(), '\n') == 1);
  const auto m = nlohmann::json::parse(read_file(dir / "empty.csv.manifest.json"));
  CHECK(m["n_total"] == 0);
}

TEST_CASE("extract from a hard-wired heating curve") {
  TempDir dir;
  const WaterConstants k;
  CompiledModel m = compile(parse_expression("s1(u)"), 0);
  const auto [xs, ys] = heating_curve_knots(k, -50.0, 800.0);
  m.shapes[0].backend = PiecewiseLinearShape{xs, ys};
  m.shapes[0].standardizer.enabled = false;
  m.shapes[0].input_range = {{-50.0, 800.0}};
  save_model(m, dir / "oracle.json");
  CHECK(run({"extract", dir / "oracle.json", "--shape", "1", "--out", dir / "report.json"}) == 0);
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  CHECK(report["pattern"] == "RPRPR");
  for (const auto& [name, p] : report["properties"].items()) {
    INFO(name);
    CHECK(std::abs(p["relative_error"].get<double>()) <= 1e-6);
  }
  CHECK(run({"extract", dir / "oracle.json", "--shape", "2", "--out", dir / "r2.json"}) == 3);
  CHECK(run({"extract", dir / "missing.json", "--out", dir / "r3.json"}) == 2);
}

TEST_CASE("config files") {
  SearchConfig cfg;
  apply_preset(cfg, "paper-appendix");
  CHECK(cfg.population_size == 100);
  CHECK(cfg.inner.max_epochs == 200);
  apply_preset(cfg, "paper-main");
  CHECK(cfg.population_size == 500);
  CHECK(cfg.inner.max_epochs == 1000);

  apply_config_text(cfg,
                    "# comment\n[search]\ntournament_size = 7\nsubtree_selection = weighted\n"
                    "[optimization]\nlearning_rate = 0.01\n[shape_function]\nhidden_layers = 2\nhidden_width = 4\n");
  CHECK(cfg.tournament_size == 7);
  CHECK(cfg.weighted_subtree_selection);
  CHECK(cfg.inner.learning_rates == std::vector<double>{0.01});
  CHECK(cfg.compile.layer_widths == std::vector<std::size_t>{1, 4, 4, 1});

  SearchConfig back;
  apply_config_text(back, config_to_text(cfg));
  CHECK(config_snapshot(back) == config_snapshot(cfg));

  auto code_of = [](const std::string& text) {
    SearchConfig c;
    try {
      apply_config_text(c, text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code_of("[search]\nbogus = 1\n") == ErrorCode::ConfigError);
  CHECK(code_of("[nowhere]\n") == ErrorCode::ConfigError);
  CHECK(code_of("[search]\npopulation_size = many\n") == ErrorCode::ConfigError);
  CHECK(code_of("[search]\nconstant_range = -1, 1\n") == ErrorCode::ConfigError);
  CHECK(code_of("[search]\np_crossover = 0.9\n") == ErrorCode::ConfigError);
  CHECK(code_of("[search\n") == ErrorCode::ParseError);
  CHECK(code_of("[search]\njust words\n") == ErrorCode::ParseError);
}
