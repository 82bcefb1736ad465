#include "share/parser.hpp"

#include <fmt/format.h>

#include <array>
#include <cctype>
#include <charconv>
#include <numbers>

#include "share/error.hpp"

namespace share {

namespace {

constexpr std::array<std::string_view, 6> kFunctions = {"sin", "cos", "tan", "exp", "log", "sqrt"};

bool is_shape_name(std::string_view id) {
  if (id.size() < 2 || id[0] != 's') return false;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(id[i]))) return false;
  }
  return true;
}

class Parser {
 public:
  Parser(std::string_view text, const ParseOptions& opts) : text_(text), opts_(opts) {
    if (opts_.known_vars) names_ = *opts_.known_vars;
  }

  ExprTree run() {
    skip_ws();
    if (at_end()) fail("empty expression");
    Node root = parse_sum();
    skip_ws();
    if (!at_end()) fail(fmt::format("unexpected '{}'", text_[pos_]));
    renumber_shapes(root);
    return ExprTree{std::move(root), names_};
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t pos) const {
    throw ParseError(msg, opts_.line, pos + 1);
  }

  bool at_end() const { return pos_ >= text_.size(); }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (!at_end() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (at_end()) fail(fmt::format("expected '{}' but reached end of input", c));
      fail(fmt::format("expected '{}'", c));
    }
  }

  Node parse_sum() {
    Node lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        lhs = Node::binary(BinaryOp::Add, std::move(lhs), parse_product());
      } else if (accept('-')) {
        lhs = Node::binary(BinaryOp::Sub, std::move(lhs), parse_product());
      } else {
        return lhs;
      }
    }
  }

  Node parse_product() {
    Node lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = Node::binary(BinaryOp::Mul, std::move(lhs), parse_unary());
      } else if (accept('/')) {
        lhs = Node::binary(BinaryOp::Div, std::move(lhs), parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Node parse_unary() {
    if (accept('-')) {
      Node operand = parse_unary();
      if (operand.kind == NodeKind::Constant) {
        operand.value = -operand.value;
        return operand;
      }
      std::vector<Node> args;
      args.push_back(std::move(operand));
      return Node::function("neg", std::move(args));
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Node parse_power() {
    Node base = parse_primary();
    if (accept('^')) {
      std::vector<Node> args;
      args.push_back(std::move(base));
      args.push_back(parse_unary());
      return Node::function("pow", std::move(args));
    }
    return base;
  }

  Node parse_primary() {
    skip_ws();
    if (at_end()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Node inner = parse_sum();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail(fmt::format("unexpected '{}'", c));
  }

  Node parse_number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
      ++pos_;
    }
    if (!at_end() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    const auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
      fail_at(fmt::format("malformed number '{}'", text_.substr(start, pos_ - start)), start);
    }
    return Node::constant(value);
  }

  Node parse_identifier() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string id(text_.substr(start, pos_ - start));
    skip_ws();
    if (!at_end() && text_[pos_] == '(') {
      ++pos_;
      if (is_shape_name(id)) {
        Node arg = parse_sum();
        expect(')');
        return Node::shape(0, std::move(arg));
      }
      if (!is_known_function(id)) {
        throw Error(ErrorCode::UnknownFunction,
                    fmt::format("unknown function '{}' at column {}", id, start + 1));
      }
      std::vector<Node> args;
      args.push_back(parse_sum());
      expect(')');
      return Node::function(id, std::move(args));
    }
    return variable_node(id, start);
  }

  Node variable_node(const std::string& id, std::size_t start) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == id) return Node::variable(i);
    }
    if (id == "pi") return Node::constant(std::numbers::pi);
    if (opts_.known_vars) {
      throw Error(ErrorCode::SchemaError,
                  fmt::format("unknown variable '{}' at column {}", id, start + 1));
    }
    names_.push_back(id);
    return Node::variable(names_.size() - 1);
  }

  std::string_view text_;
  const ParseOptions& opts_;
  std::vector<std::string> names_;
  std::size_t pos_ = 0;
};

}  // namespace

bool is_known_function(std::string_view name) {
  for (std::string_view f : kFunctions) {
    if (f == name) return true;
  }
  return false;
}

ExprTree parse_expression(std::string_view text, const ParseOptions& opts) {
  return Parser(text, opts).run();
}

}  // namespace share
