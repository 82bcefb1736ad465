#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "share/evaluator.hpp"

namespace share {

/// JSON text holding the expression, variable names, per-shape network
/// layout, parameters and standardizer statistics. Floating-point values are
/// stored as hex of their little-endian bytes so a round trip is bit-exact.
std::string serialize_model(const CompiledModel& model);
CompiledModel deserialize_model(std::string_view text);

void save_model(const CompiledModel& model, const std::filesystem::path& path);
CompiledModel load_model(const std::filesystem::path& path);

std::string doubles_to_hex(std::span<const double> values);
std::vector<double> hex_to_doubles(std::string_view hex);

}  // namespace share
