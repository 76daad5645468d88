#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "histex/schema.h"

namespace histex {

enum class CompareOp : std::uint8_t { EQ, LT, GT, LE, GE, NE };

std::string_view compare_op_text(CompareOp op);

struct Comparison {
  Column column = Column::RECKEY;
  CompareOp op = CompareOp::EQ;
  std::int64_t value = 0;

  bool holds(std::int64_t lhs) const;
  bool operator==(const Comparison &) const = default;
};

/// Boolean tree of column comparisons. An AND node without children is vacuously true,
/// an OR node without children is false.
struct PredicateExpr {
  enum class Kind : std::uint8_t { COMPARE, AND, OR };

  Kind kind = Kind::AND;
  Comparison cmp;
  std::vector<PredicateExpr> children;

  static PredicateExpr compare(Column column, CompareOp op, std::int64_t value);
  static PredicateExpr all_of(std::vector<PredicateExpr> children);
  static PredicateExpr any_of(std::vector<PredicateExpr> children);

  /// `value_of` maps a Column to the row's integer value.
  template <typename ValueOf>
  bool evaluate(const ValueOf &value_of) const {
    switch (kind) {
      case Kind::COMPARE:
        return cmp.holds(value_of(cmp.column));
      case Kind::AND:
        for (const auto &c : children) {
          if (!c.evaluate(value_of)) return false;
        }
        return true;
      case Kind::OR:
        for (const auto &c : children) {
          if (c.evaluate(value_of)) return true;
        }
        return false;
    }
    return false;
  }

  /// Distinct columns referenced anywhere in the tree.
  std::vector<Column> columns() const;

  bool operator==(const PredicateExpr &other) const;
};

/// Grammar: expr := term ('or' term)* ; term := factor ('and' factor)* ;
/// factor := '(' expr ')' | column op integer. Keywords and column names are case-insensitive.
/// Throws SyntaxError (offset relative to `text`) or UnknownColumn.
PredicateExpr parse_predicate(std::string_view text);

/// Canonical text; compound children are parenthesized so parsing the result rebuilds the same tree.
std::string render_predicate(const PredicateExpr &expr);

}  // namespace histex
