#pragma once

// INI-style run configuration with [search], [optimization] and
// [shape_function] sections. Unknown sections or keys are errors.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "share/gp.hpp"

namespace share {

/// "paper-main" (population 500, 1000 epochs) or "paper-appendix" (100, 200).
void apply_preset(SearchConfig& cfg, std::string_view preset);

void apply_config_text(SearchConfig& cfg, std::string_view text);
void apply_config_file(SearchConfig& cfg, const std::filesystem::path& path);

using ConfigSnapshot = std::map<std::string, std::map<std::string, std::string>>;

/// Every setting as text, keyed by section then key. Feeding it back reproduces `cfg`.
ConfigSnapshot config_snapshot(const SearchConfig& cfg);
std::string config_to_text(const SearchConfig& cfg);

}  // namespace share
