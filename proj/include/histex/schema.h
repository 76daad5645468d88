#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace histex {

using Key = std::int64_t;
using TxnId = int;

// Columns of the canonical table T, in declaration order.
enum class Column : std::uint8_t {
  RECKEY,
  RECVAL,
  C2,
  C3,
  C4,
  C5,
  C6,
  C50,
  C100,
  K2,
  K3,
  K4,
  K5,
  K6,
  K50,
  K100,
};

inline constexpr std::size_t kColumnCount = 16;

inline constexpr std::array<Column, kColumnCount> kAllColumns = {
    Column::RECKEY, Column::RECVAL, Column::C2, Column::C3,  Column::C4, Column::C5,
    Column::C6,     Column::C50,    Column::C100, Column::K2, Column::K3, Column::K4,
    Column::K5,     Column::K6,     Column::K50, Column::K100,
};

std::string_view column_name(Column column);

/// Case-insensitive lookup; nullopt for anything outside the schema.
std::optional<Column> column_from_name(std::string_view name);

/// N for cN / kN columns, 0 for reckey and recval.
int column_modulus(Column column);

bool is_indexed_by_default(Column column);

enum class IsolationLevel : std::uint8_t { RU, RC, RR, SR };

std::string_view level_name(IsolationLevel level);
std::optional<IsolationLevel> level_from_name(std::string_view name);

}  // namespace histex
