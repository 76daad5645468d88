#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "histex/predicate.h"
#include "histex/schema.h"

namespace histex {

enum class OpKind : std::uint8_t { PRED, MAP, IL, R, W, RW, I, D, PR, SU, SS, C, A };

std::string_view op_name(OpKind kind);

/// PRED and MAP run in the monitor only and carry no transaction.
bool is_declarative(OpKind kind);

/// W, RW, I, D and SU all modify rows.
bool is_write(OpKind kind);

struct RowLimit {
  bool all = false;
  std::int64_t count = 0;

  static RowLimit rows(std::int64_t n) { return RowLimit{false, n}; }
  static RowLimit everything() { return RowLimit{true, 0}; }
  bool operator==(const RowLimit &) const = default;
};

/// One parsed operation. Which optional fields are set depends on `kind`:
///   PRED  pred_var, predicate            MAP  row_var, literal (reckey)
///   IL    level                          R    row_var, column_spec[<=1], value_var
///   W     row_var, then literal | value_var | column_spec+value_spec | nothing (default increment)
///   RW    row_var, value_var             I    row_var, column_spec+value_spec
///   D     row_var                        PR   pred_var, column_spec[1] | aggregate, row_limit, row_var, value_var
///   SU    pred_var, literal (delta)      SS   pred_var, aggregate (count) | column_spec[1] (sum)
struct Step {
  OpKind kind = OpKind::C;
  TxnId txn = 0;
  std::optional<std::string> row_var;
  std::optional<std::string> value_var;
  std::optional<std::string> pred_var;
  std::optional<std::int64_t> literal;
  std::vector<Column> column_spec;
  std::vector<std::int64_t> value_spec;
  std::optional<RowLimit> row_limit;
  bool aggregate = false;
  std::optional<IsolationLevel> level;
  std::optional<PredicateExpr> predicate;

  // Byte offset of the operation token in the source; not part of equality.
  std::size_t position = 0;

  bool operator==(const Step &other) const;
};

struct HistoryProgram {
  std::string source_name;
  // `#@ key=value` lines; the generator stores template coordinates here.
  std::map<std::string, std::string> metadata;
  std::vector<Step> steps;
  // Some transaction never reaches C or A. A warning, not an error.
  bool unterminated = false;

  std::vector<TxnId> transactions() const;

  /// Structural equality: steps and metadata.
  bool operator==(const HistoryProgram &other) const;
};

HistoryProgram parse_history(std::string_view text, std::string source_name = {});

std::string render_history(const HistoryProgram &program);

/// Renders one operation. When `bindings` is given, bound row variables print as `A=100`.
std::string render_step(const Step &step, const std::map<std::string, Key> *bindings = nullptr);

}  // namespace histex
