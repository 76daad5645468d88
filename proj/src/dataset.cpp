#include "histex/dataset.h"

#include "histex/errors.h"

namespace histex {

Row canonical_row(std::int64_t i) {
  Row row;
  for (Column c : kAllColumns) {
    const int n = column_modulus(c);
    if (n != 0) row.set(c, (i - 1) % n);
  }
  row.set(Column::RECKEY, 100 * i);
  row.set(Column::RECVAL, 10000 * i);
  return row;
}

CanonicalTable build_canonical_table(std::int64_t row_count) {
  if (row_count <= 0 || row_count % 100 != 0) {
    throw InvalidRowCount("row count must be a positive multiple of 100, got " + std::to_string(row_count));
  }
  CanonicalTable table;
  table.row_count = row_count;
  for (Column c : kAllColumns) {
    if (is_indexed_by_default(c)) table.indexed.set(static_cast<std::size_t>(c));
  }
  for (std::int64_t i = 1; i <= row_count; ++i) {
    Row row = canonical_row(i);
    table.rows.emplace(row.key(), row);
  }
  return table;
}

bool eval_predicate(const Row &row, const PredicateExpr &predicate) {
  if (row.tombstone) return false;
  return predicate.evaluate([&row](Column c) { return row.get(c); });
}

std::string dump_tsv(const CanonicalTable &table) {
  std::string out;
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (i > 0) out += '\t';
    out += column_name(kAllColumns[i]);
  }
  out += '\n';
  for (const auto &[key, row] : table.rows) {
    if (row.tombstone) continue;
    for (std::size_t i = 0; i < kColumnCount; ++i) {
      if (i > 0) out += '\t';
      out += std::to_string(row.values[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace histex
