#include "histex/schema.h"

#include <algorithm>
#include <cctype>
#include <string>

namespace histex {

namespace {

constexpr std::array<std::string_view, kColumnCount> kColumnNames = {
    "reckey", "recval", "c2", "c3", "c4", "c5", "c6", "c50", "c100",
    "k2",     "k3",     "k4", "k5", "k6", "k50", "k100",
};

constexpr std::array<int, kColumnCount> kModulus = {0, 0, 2, 3, 4, 5, 6, 50, 100, 2, 3, 4, 5, 6, 50, 100};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string_view column_name(Column column) { return kColumnNames[static_cast<std::size_t>(column)]; }

std::optional<Column> column_from_name(std::string_view name) {
  const auto key = lower(name);
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (kColumnNames[i] == key) {
      return static_cast<Column>(i);
    }
  }
  return std::nullopt;
}

int column_modulus(Column column) { return kModulus[static_cast<std::size_t>(column)]; }

bool is_indexed_by_default(Column column) { return column == Column::RECKEY || column >= Column::K2; }

std::string_view level_name(IsolationLevel level) {
  switch (level) {
    case IsolationLevel::RU:
      return "RU";
    case IsolationLevel::RC:
      return "RC";
    case IsolationLevel::RR:
      return "RR";
    case IsolationLevel::SR:
      return "SR";
  }
  return "??";
}

std::optional<IsolationLevel> level_from_name(std::string_view name) {
  const auto key = lower(name);
  if (key == "ru") return IsolationLevel::RU;
  if (key == "rc") return IsolationLevel::RC;
  if (key == "rr") return IsolationLevel::RR;
  if (key == "sr") return IsolationLevel::SR;
  return std::nullopt;
}

}  // namespace histex
