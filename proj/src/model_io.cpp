#include "share/model_io.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <json.hpp>

#include "share/error.hpp"
#include "share/io.hpp"
#include "share/parser.hpp"

namespace share {

using json = nlohmann::json;

std::string doubles_to_hex(std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::string out;
  out.reserve(values.size() * 16);
  for (double v : values) {
    unsigned char bytes[8];
    std::memcpy(bytes, &v, 8);
    for (unsigned char b : bytes) out += fmt::format("{:02x}", b);
  }
  return out;
}

std::vector<double> hex_to_doubles(std::string_view hex) {
  if (hex.size() % 16 != 0) throw Error(ErrorCode::SchemaError, "hex blob length is not a multiple of 16");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorCode::SchemaError, fmt::format("invalid hex digit '{}'", c));
  };
  std::vector<double> out(hex.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) {
    unsigned char bytes[8];
    for (std::size_t j = 0; j < 8; ++j) {
      const std::size_t p = i * 16 + j * 2;
      bytes[j] = static_cast<unsigned char>(nibble(hex[p]) * 16 + nibble(hex[p + 1]));
    }
    std::memcpy(&out[i], bytes, 8);
  }
  return out;
}

namespace {

std::string hex1(double v) { return doubles_to_hex(std::span<const double>(&v, 1)); }

double unhex1(const json& j) {
  const std::vector<double> v = hex_to_doubles(j.get<std::string>());
  if (v.size() != 1) throw Error(ErrorCode::SchemaError, "expected a single hex-encoded value");
  return v[0];
}

}  // namespace

std::string serialize_model(const CompiledModel& model) {
  // Shapes are written in preorder so the rendered text numbers them consistently.
  ExprTree tree = model.tree;
  std::vector<std::size_t> order;
  for (const Node* n : preorder(tree.root)) {
    if (n->kind == NodeKind::Shape) order.push_back(n->shape_id);
  }
  renumber_shapes(tree.root);

  json j;
  j["format"] = "share-model";
  j["version"] = 1;
  j["expression"] = render(tree);
  j["variables"] = tree.var_names;
  j["div_epsilon"] = hex1(model.div_epsilon);
  json shapes = json::array();
  for (std::size_t k = 0; k < order.size(); ++k) {
    const ShapeSlot& slot = model.shapes.at(order[k]);
    json s;
    s["id"] = k + 1;
    const Standardizer& st = slot.standardizer;
    s["standardizer"] = {{"enabled", st.enabled},
                         {"initialized", st.initialized},
                         {"running_mean", hex1(st.running_mean)},
                         {"running_var", hex1(st.running_var)},
                         {"momentum", hex1(st.momentum)},
                         {"epsilon", hex1(st.epsilon)}};
    if (slot.input_range) {
      s["input_range"] = {hex1(slot.input_range->first), hex1(slot.input_range->second)};
    } else {
      s["input_range"] = nullptr;
    }
    if (const auto* mlp = std::get_if<MlpShape>(&slot.backend)) {
      s["kind"] = "mlp";
      s["layer_widths"] = mlp->widths();
      s["params"] = doubles_to_hex(mlp->params());
    } else {
      const auto& pwl = std::get<PiecewiseLinearShape>(slot.backend);
      s["kind"] = "piecewise_linear";
      s["xs"] = doubles_to_hex(pwl.xs);
      s["ys"] = doubles_to_hex(pwl.ys);
    }
    shapes.push_back(std::move(s));
  }
  j["shapes"] = std::move(shapes);
  return j.dump(2) + "\n";
}

CompiledModel deserialize_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, fmt::format("model file: {}", e.what()));
  }
  try {
    if (j.at("format") != "share-model" || j.at("version") != 1) {
      throw Error(ErrorCode::SchemaError, "not a version 1 share model file");
    }
    ParseOptions opts;
    opts.known_vars = j.at("variables").get<std::vector<std::string>>();
    CompiledModel model;
    model.tree = parse_expression(j.at("expression").get<std::string>(), opts);
    model.div_epsilon = unhex1(j.at("div_epsilon"));
    model.program = build_program(model.tree.root);
    const json& shapes = j.at("shapes");
    if (shapes.size() != count_shapes(model.tree.root)) {
      throw Error(ErrorCode::SchemaError, "shape count does not match the expression");
    }
    for (const json& s : shapes) {
      ShapeSlot slot;
      const json& st = s.at("standardizer");
      slot.standardizer.enabled = st.at("enabled").get<bool>();
      slot.standardizer.initialized = st.at("initialized").get<bool>();
      slot.standardizer.running_mean = unhex1(st.at("running_mean"));
      slot.standardizer.running_var = unhex1(st.at("running_var"));
      slot.standardizer.momentum = unhex1(st.at("momentum"));
      slot.standardizer.epsilon = unhex1(st.at("epsilon"));
      if (!s.at("input_range").is_null()) {
        slot.input_range = std::make_pair(unhex1(s["input_range"].at(0)), unhex1(s["input_range"].at(1)));
      }
      const std::string kind = s.at("kind").get<std::string>();
      if (kind == "mlp") {
        MlpShape mlp(s.at("layer_widths").get<std::vector<std::size_t>>());
        const std::vector<double> params = hex_to_doubles(s.at("params").get<std::string>());
        if (params.size() != mlp.n_params()) {
          throw Error(ErrorCode::SchemaError, "parameter count does not match layer widths");
        }
        std::copy(params.begin(), params.end(), mlp.params().begin());
        slot.backend = std::move(mlp);
      } else if (kind == "piecewise_linear") {
        PiecewiseLinearShape pwl;
        pwl.xs = hex_to_doubles(s.at("xs").get<std::string>());
        pwl.ys = hex_to_doubles(s.at("ys").get<std::string>());
        if (pwl.xs.size() != pwl.ys.size() || pwl.xs.size() < 2) {
          throw Error(ErrorCode::SchemaError, "piecewise-linear shape needs matching knots");
        }
        slot.backend = std::move(pwl);
      } else {
        throw Error(ErrorCode::SchemaError, fmt::format("unknown shape kind '{}'", kind));
      }
      model.shapes.push_back(std::move(slot));
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, fmt::format("model file: {}", e.what()));
  }
}

void save_model(const CompiledModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

CompiledModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace share
