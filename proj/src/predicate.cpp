#include "histex/predicate.h"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "histex/errors.h"

namespace histex {

std::string_view compare_op_text(CompareOp op) {
  switch (op) {
    case CompareOp::EQ:
      return "=";
    case CompareOp::LT:
      return "<";
    case CompareOp::GT:
      return ">";
    case CompareOp::LE:
      return "<=";
    case CompareOp::GE:
      return ">=";
    case CompareOp::NE:
      return "<>";
  }
  return "?";
}

bool Comparison::holds(std::int64_t lhs) const {
  switch (op) {
    case CompareOp::EQ:
      return lhs == value;
    case CompareOp::LT:
      return lhs < value;
    case CompareOp::GT:
      return lhs > value;
    case CompareOp::LE:
      return lhs <= value;
    case CompareOp::GE:
      return lhs >= value;
    case CompareOp::NE:
      return lhs != value;
  }
  return false;
}

PredicateExpr PredicateExpr::compare(Column column, CompareOp op, std::int64_t value) {
  PredicateExpr e;
  e.kind = Kind::COMPARE;
  e.cmp = Comparison{column, op, value};
  return e;
}

PredicateExpr PredicateExpr::all_of(std::vector<PredicateExpr> children) {
  PredicateExpr e;
  e.kind = Kind::AND;
  e.children = std::move(children);
  return e;
}

PredicateExpr PredicateExpr::any_of(std::vector<PredicateExpr> children) {
  PredicateExpr e;
  e.kind = Kind::OR;
  e.children = std::move(children);
  return e;
}

std::vector<Column> PredicateExpr::columns() const {
  std::vector<Column> out;
  if (kind == Kind::COMPARE) {
    out.push_back(cmp.column);
    return out;
  }
  for (const auto &c : children) {
    for (Column col : c.columns()) {
      if (std::find(out.begin(), out.end(), col) == out.end()) out.push_back(col);
    }
  }
  return out;
}

bool PredicateExpr::operator==(const PredicateExpr &other) const {
  if (kind != other.kind) return false;
  if (kind == Kind::COMPARE) return cmp == other.cmp;
  return children == other.children;
}

namespace {

class PredicateParser {
 public:
  explicit PredicateParser(std::string_view text) : text_(text) {}

  PredicateExpr parse() {
    skip_space();
    if (pos_ == text_.size()) fail("empty predicate");
    auto expr = parse_or();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return expr;
  }

 private:
  PredicateExpr parse_or() {
    std::vector<PredicateExpr> terms;
    terms.push_back(parse_and());
    while (accept_keyword("or")) terms.push_back(parse_and());
    if (terms.size() == 1) return std::move(terms.front());
    return PredicateExpr::any_of(std::move(terms));
  }

  PredicateExpr parse_and() {
    std::vector<PredicateExpr> factors;
    factors.push_back(parse_factor());
    while (accept_keyword("and")) factors.push_back(parse_factor());
    if (factors.size() == 1) return std::move(factors.front());
    return PredicateExpr::all_of(std::move(factors));
  }

  PredicateExpr parse_factor() {
    skip_space();
    if (peek() == '(') {
      ++pos_;
      auto inner = parse_or();
      skip_space();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return inner;
    }
    return parse_comparison();
  }

  PredicateExpr parse_comparison() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    if (start == pos_) fail("expected column name");
    const std::string name(text_.substr(start, pos_ - start));
    auto column = column_from_name(name);
    if (!column) throw UnknownColumn(name);

    skip_space();
    CompareOp op;
    if (match("<=")) {
      op = CompareOp::LE;
    } else if (match(">=")) {
      op = CompareOp::GE;
    } else if (match("<>")) {
      op = CompareOp::NE;
    } else if (match("=")) {
      op = CompareOp::EQ;
    } else if (match("<")) {
      op = CompareOp::LT;
    } else if (match(">")) {
      op = CompareOp::GT;
    } else {
      fail("expected comparison operator");
    }

    skip_space();
    const std::size_t num_start = pos_;
    if (peek() == '-') ++pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    std::int64_t value = 0;
    const char *first = text_.data() + num_start;
    const char *last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || first == last) {
      pos_ = num_start;
      fail("expected integer constant");
    }
    return PredicateExpr::compare(*column, op, value);
  }

  bool accept_keyword(std::string_view kw) {
    skip_space();
    if (text_.size() - pos_ < kw.size()) return false;
    for (std::size_t i = 0; i < kw.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(text_[pos_ + i])) != kw[i]) return false;
    }
    const std::size_t end = pos_ + kw.size();
    if (end < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_')) return false;
    pos_ = end;
    return true;
  }

  bool match(std::string_view s) {
    if (text_.substr(pos_, s.size()) == s) {
      pos_ += s.size();
      return true;
    }
    return false;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string &why) const {
    std::size_t end = pos_;
    while (end < text_.size() && !std::isspace(static_cast<unsigned char>(text_[end]))) ++end;
    std::string token(text_.substr(pos_, end - pos_));
    throw SyntaxError(pos_, token, "predicate: " + why + " at offset " + std::to_string(pos_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void render_into(const PredicateExpr &e, std::string &out) {
  if (e.kind == PredicateExpr::Kind::COMPARE) {
    out += column_name(e.cmp.column);
    out += compare_op_text(e.cmp.op);
    out += std::to_string(e.cmp.value);
    return;
  }
  const char *sep = e.kind == PredicateExpr::Kind::AND ? " and " : " or ";
  for (std::size_t i = 0; i < e.children.size(); ++i) {
    if (i > 0) out += sep;
    const auto &c = e.children[i];
    if (c.kind == PredicateExpr::Kind::COMPARE) {
      render_into(c, out);
    } else {
      out += '(';
      render_into(c, out);
      out += ')';
    }
  }
}

}  // namespace

PredicateExpr parse_predicate(std::string_view text) { return PredicateParser(text).parse(); }

std::string render_predicate(const PredicateExpr &expr) {
  std::string out;
  render_into(expr, out);
  return out;
}

}  // namespace histex
