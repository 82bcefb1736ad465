#include "share/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <set>

#include "share/error.hpp"
#include "share/io.hpp"

namespace share {

void apply_preset(SearchConfig& cfg, std::string_view preset) {
  if (preset == "paper-main") {
    cfg.population_size = 500;
    cfg.inner.max_epochs = 1000;
  } else if (preset == "paper-appendix") {
    cfg.population_size = 100;
    cfg.inner.max_epochs = 200;
  } else {
    throw Error(ErrorCode::ConfigError, fmt::format("unknown preset '{}' (paper-main, paper-appendix)", preset));
  }
}

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = v.find(',', pos);
    out.push_back(trim(std::string_view(v).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
    if (comma == std::string::npos) return out;
    pos = comma + 1;
  }
}

struct Ctx {
  std::size_t line;
  std::string key;

  [[noreturn]] void bad(const std::string& what) const {
    throw Error(ErrorCode::ConfigError, fmt::format("line {}: {}: {}", line, key, what));
  }

  double real(const std::string& v) const {
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(fmt::format("'{}' is not a number", v));
    return out;
  }

  std::size_t count(const std::string& v) const {
    unsigned long long out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      bad(fmt::format("'{}' is not a non-negative integer", v));
    }
    return static_cast<std::size_t>(out);
  }

  bool flag(const std::string& v) const {
    const std::string l = lower(v);
    if (l == "true" || l == "yes" || l == "1") return true;
    if (l == "false" || l == "no" || l == "0") return false;
    bad(fmt::format("'{}' is not true/false", v));
  }
};

using Setter = std::function<void(SearchConfig&, const std::string&, const Ctx&)>;

std::size_t hidden_layers(const SearchConfig& c) { return c.compile.layer_widths.size() - 2; }
std::size_t hidden_width(const SearchConfig& c) {
  return c.compile.layer_widths.size() > 2 ? c.compile.layer_widths[1] : 0;
}

void set_layers(SearchConfig& c, std::size_t layers, std::size_t width) {
  std::vector<std::size_t> w{1};
  for (std::size_t i = 0; i < layers; ++i) w.push_back(width);
  w.push_back(1);
  c.compile.layer_widths = std::move(w);
}

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"search",
       {
           {"population_size", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.population_size = x.count(v); }},
           {"generations", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.generations = x.count(v); }},
           {"tournament_size", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.tournament_size = x.count(v); }},
           {"function_set",
            [](SearchConfig&, const std::string& v, const Ctx& x) {
              std::set<std::string> got;
              for (const std::string& f : split_list(lower(v))) got.insert(f);
              if (got != std::set<std::string>{"add", "mul", "div", "shape"}) {
                x.bad("only the set add, mul, div, shape is supported");
              }
            }},
           {"constant_range",
            [](SearchConfig&, const std::string& v, const Ctx& x) {
              if (lower(v) != "none") x.bad("transparent expressions have no constants; use none");
            }},
           {"p_crossover", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.p_crossover = x.real(v); }},
           {"p_subtree_mutation",
            [](SearchConfig& c, const std::string& v, const Ctx& x) { c.p_subtree_mutation = x.real(v); }},
           {"p_point_mutation", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.p_point_mutation = x.real(v); }},
           {"p_hoist_mutation", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.p_hoist_mutation = x.real(v); }},
           {"p_point_replace", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.p_point_replace = x.real(v); }},
           {"parsimony_coefficient",
            [](SearchConfig& c, const std::string& v, const Ctx& x) { c.parsimony_coefficient = x.real(v); }},
           {"max_init_depth", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.max_init_depth = x.count(v); }},
           {"subtree_selection",
            [](SearchConfig& c, const std::string& v, const Ctx& x) {
              const std::string l = lower(v);
              if (l == "uniform") {
                c.weighted_subtree_selection = false;
              } else if (l == "weighted") {
                c.weighted_subtree_selection = true;
              } else {
                x.bad("expected uniform or weighted");
              }
            }},
           {"seed", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.seed = x.count(v); }},
       }},
      {"optimization",
       {
           {"algorithm",
            [](SearchConfig&, const std::string& v, const Ctx& x) {
              if (lower(v) != "adam") x.bad("only adam is supported");
            }},
           {"max_epochs",
            [](SearchConfig& c, const std::string& v, const Ctx& x) { c.inner.max_epochs = static_cast<int>(x.count(v)); }},
           {"learning_rate",
            [](SearchConfig& c, const std::string& v, const Ctx& x) {
              if (lower(v) == "auto") {
                if (c.inner.learning_rates.size() < 2) c.inner.learning_rates = {1e-3, 1e-2, 1e-1};
              } else {
                c.inner.learning_rates = {x.real(v)};
              }
            }},
           {"learning_rates",
            [](SearchConfig& c, const std::string& v, const Ctx& x) {
              c.inner.learning_rates.clear();
              for (const std::string& s : split_list(v)) c.inner.learning_rates.push_back(x.real(s));
            }},
           {"weight_decay", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.inner.weight_decay = x.real(v); }},
           {"batch_size",
            [](SearchConfig& c, const std::string& v, const Ctx& x) {
              c.inner.batch_size = lower(v) == "auto" ? 0 : x.count(v);
            }},
           {"early_stop_patience",
            [](SearchConfig& c, const std::string& v, const Ctx& x) {
              c.inner.early_stop_patience = static_cast<int>(x.count(v));
            }},
           {"trial_fraction", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.inner.trial_fraction = x.real(v); }},
       }},
      {"shape_function",
       {
           {"hidden_layers",
            [](SearchConfig& c, const std::string& v, const Ctx& x) { set_layers(c, x.count(v), hidden_width(c)); }},
           {"hidden_width",
            [](SearchConfig& c, const std::string& v, const Ctx& x) { set_layers(c, hidden_layers(c), x.count(v)); }},
           {"activation",
            [](SearchConfig&, const std::string& v, const Ctx& x) {
              if (lower(v) != "elu") x.bad("only elu is supported");
            }},
           {"standardize", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.compile.standardize = x.flag(v); }},
           {"momentum", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.compile.momentum = x.real(v); }},
           {"epsilon", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.compile.epsilon = x.real(v); }},
           {"div_epsilon", [](SearchConfig& c, const std::string& v, const Ctx& x) { c.compile.div_epsilon = x.real(v); }},
       }},
  };
  return table;
}

}  // namespace

void apply_config_text(SearchConfig& cfg, std::string_view text) {
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no, line.size());
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!setters().count(section)) {
        throw Error(ErrorCode::ConfigError, fmt::format("line {}: unknown section [{}]", line_no, section));
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no, 1);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) {
      throw Error(ErrorCode::ConfigError, fmt::format("line {}: key '{}' appears before any section", line_no, key));
    }
    const auto& keys = setters().at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) {
      throw Error(ErrorCode::ConfigError, fmt::format("line {}: unknown key '{}' in [{}]", line_no, key, section));
    }
    it->second(cfg, value, Ctx{line_no, key});
  }
  cfg.validate();
  if (cfg.inner.learning_rates.empty()) throw Error(ErrorCode::ConfigError, "learning_rates must not be empty");
  if (cfg.inner.max_epochs <= 0) throw Error(ErrorCode::ConfigError, "max_epochs must be positive");
  if (cfg.compile.layer_widths.size() < 3 || hidden_width(cfg) == 0) {
    throw Error(ErrorCode::ConfigError, "shape networks need at least one hidden layer of positive width");
  }
}

void apply_config_file(SearchConfig& cfg, const std::filesystem::path& path) {
  apply_config_text(cfg, read_file(path));
}

ConfigSnapshot config_snapshot(const SearchConfig& c) {
  auto real = [](double v) { return fmt::format("{}", v); };
  std::string lrs;
  for (double lr : c.inner.learning_rates) lrs += (lrs.empty() ? "" : ", ") + real(lr);
  ConfigSnapshot s;
  s["search"] = {
      {"population_size", std::to_string(c.population_size)},
      {"generations", std::to_string(c.generations)},
      {"tournament_size", std::to_string(c.tournament_size)},
      {"function_set", "add, mul, div, shape"},
      {"constant_range", "none"},
      {"p_crossover", real(c.p_crossover)},
      {"p_subtree_mutation", real(c.p_subtree_mutation)},
      {"p_point_mutation", real(c.p_point_mutation)},
      {"p_hoist_mutation", real(c.p_hoist_mutation)},
      {"p_point_replace", real(c.p_point_replace)},
      {"parsimony_coefficient", real(c.parsimony_coefficient)},
      {"max_init_depth", std::to_string(c.max_init_depth)},
      {"subtree_selection", c.weighted_subtree_selection ? "weighted" : "uniform"},
      {"seed", std::to_string(c.seed)},
  };
  s["optimization"] = {
      {"algorithm", "adam"},
      {"max_epochs", std::to_string(c.inner.max_epochs)},
      {"learning_rate", c.inner.learning_rates.size() == 1 ? real(c.inner.learning_rates[0]) : "auto"},
      {"learning_rates", lrs},
      {"weight_decay", real(c.inner.weight_decay)},
      {"batch_size", c.inner.batch_size == 0 ? "auto" : std::to_string(c.inner.batch_size)},
      {"early_stop_patience", std::to_string(c.inner.early_stop_patience)},
      {"trial_fraction", real(c.inner.trial_fraction)},
  };
  s["shape_function"] = {
      {"hidden_layers", std::to_string(hidden_layers(c))},
      {"hidden_width", std::to_string(hidden_width(c))},
      {"activation", "elu"},
      {"standardize", c.compile.standardize ? "true" : "false"},
      {"momentum", real(c.compile.momentum)},
      {"epsilon", real(c.compile.epsilon)},
      {"div_epsilon", real(c.compile.div_epsilon)},
  };
  return s;
}

std::string config_to_text(const SearchConfig& cfg) {
  std::string out;
  const ConfigSnapshot snap = config_snapshot(cfg);
  for (const char* section : {"search", "optimization", "shape_function"}) {
    out += fmt::format("[{}]\n", section);
    for (const auto& [k, v] : snap.at(section)) out += fmt::format("{} = {}\n", k, v);
    out += "\n";
  }
  return out;
}

}  // namespace share
