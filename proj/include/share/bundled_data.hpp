#pragma once

#include <string_view>

namespace share {

/// Contents of data/equations.json, embedded at build time.
std::string_view bundled_equations_json();

}  // namespace share
