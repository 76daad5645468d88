#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "histex/dataset.h"
#include "histex/engine.h"
#include "histex/notation.h"

namespace histex {

enum class RecordStatus : std::uint8_t { OK, BLOCKED, RESUMED, ERROR, ABORTED_DEADLOCK, READONLY_VIOLATION };

struct OutputImage {
  std::optional<Row> before;
  std::optional<Row> after;

  bool operator==(const OutputImage &) const = default;
};

struct OutputRecord {
  std::uint64_t seq = 0;
  std::uint64_t submit_seq = 0;
  TxnId txn = 0;
  std::string op;  // rendered with bindings, e.g. R1(A=100,X)
  RecordStatus status = RecordStatus::OK;
  // Seq of the BLOCKED record this completion belongs to.
  std::optional<std::uint64_t> resumes;
  std::string error;  // ERROR code
  std::vector<std::int64_t> values;
  std::vector<FetchedRow> rows;
  std::vector<OutputImage> images;

  /// The operation finished (OK or RESUMED), as opposed to blocking or failing.
  bool executed() const { return status == RecordStatus::OK || status == RecordStatus::RESUMED; }
  bool operator==(const OutputRecord &) const = default;
};

struct OutputHistory {
  std::string name;
  std::vector<std::pair<std::string, std::string>> config;
  std::map<std::string, std::string> metadata;
  std::map<TxnId, IsolationLevel> levels;
  std::map<std::string, std::string> predicates;  // pred var -> expression text
  std::vector<OutputRecord> records;
  // COMMITTED, ABORTED, ABORTED_DEADLOCK, ACTIVE or BLOCKED.
  std::map<TxnId, std::string> final_status;
  bool stuck = false;

  bool operator==(const OutputHistory &) const = default;
};

/// What an operation text refers to, recovered from the rendered form.
struct OpTarget {
  OpKind kind = OpKind::C;
  std::optional<std::string> row_var;
  std::optional<Key> key;
  std::optional<std::string> pred_var;
};

OpTarget describe_op(std::string_view op_text);

std::string_view record_status_name(RecordStatus status);

std::string serialize(const OutputHistory &history);

/// Throws FormatError with the 1-based line number of the first bad line.
OutputHistory parse_output(std::string_view text);

}  // namespace histex
