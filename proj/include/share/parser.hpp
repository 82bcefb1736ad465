#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "share/expr.hpp"

namespace share {

struct ParseOptions {
  // When set, identifiers must name one of these variables and take its
  // position as their index. Otherwise variables are numbered by first use.
  std::optional<std::vector<std::string>> known_vars;
  // Line number reported in errors (0 = none).
  std::size_t line = 0;
};

/// Parses infix text: `+ - * /`, `^`, unary minus, parentheses, decimal
/// constants, `pi`, calls to sin/cos/tan/exp/log/sqrt and shape placeholders
/// `s<k>(...)`. Shape ids are assigned in preorder.
ExprTree parse_expression(std::string_view text, const ParseOptions& opts = {});

bool is_known_function(std::string_view name);

}  // namespace share
