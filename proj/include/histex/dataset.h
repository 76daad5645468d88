#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <map>
#include <string>

#include "histex/predicate.h"
#include "histex/schema.h"

namespace histex {

struct Row {
  std::array<std::int64_t, kColumnCount> values{};
  // Deleted by a transaction that has not committed yet. Invisible to predicates and reads.
  bool tombstone = false;

  std::int64_t get(Column c) const { return values[static_cast<std::size_t>(c)]; }
  void set(Column c, std::int64_t v) { values[static_cast<std::size_t>(c)] = v; }
  Key key() const { return get(Column::RECKEY); }

  bool operator==(const Row &) const = default;
};

/// The i-th initial row (1-based): reckey 100*i, recval 10000*i, kN = cN = (i-1) mod N.
Row canonical_row(std::int64_t i);

struct CanonicalTable {
  std::map<Key, Row> rows;  // ascending reckey is also the scan order
  std::bitset<kColumnCount> indexed;
  std::int64_t row_count = 0;

  bool is_indexed(Column c) const { return indexed.test(static_cast<std::size_t>(c)); }
  bool operator==(const CanonicalTable &) const = default;
};

/// Throws InvalidRowCount unless row_count is a positive multiple of 100.
CanonicalTable build_canonical_table(std::int64_t row_count = 200);

bool eval_predicate(const Row &row, const PredicateExpr &predicate);

/// Tab-separated dump with a header row in schema order. Tombstoned rows are skipped.
std::string dump_tsv(const CanonicalTable &table);

}  // namespace histex
