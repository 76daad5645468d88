#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "histex/analyzer.h"
#include "histex/notation.h"

namespace histex {

// Ways a predicate-class template changes the predicate's match set, plus a partial-scan form.
inline constexpr std::string_view kDefaultVariant = "default";
inline constexpr std::string_view kPredicateVariants[] = {"insert", "delete", "update", "partial"};

inline constexpr IsolationLevel kMatrixLevels[] = {IsolationLevel::RC, IsolationLevel::RR, IsolationLevel::SR};

/// One history for a single conflicting pair of `cls` between transactions at `l1` and `l2`.
/// Throws std::invalid_argument for a variant the class does not have.
HistoryProgram instantiate(HistoryClass cls, IsolationLevel l1, IsolationLevel l2, std::string_view variant = {});

/// One history per (class, L1, L2, variant). Item classes only have the default variant; an empty
/// `variants` list means the default variant for every class.
std::vector<HistoryProgram> generate_matrix(const std::vector<IsolationLevel> &levels,
                                            const std::vector<HistoryClass> &classes,
                                            const std::vector<std::string> &variants = {});

/// Four RU transactions testing whether an update of an aborting transaction can be persisted by another.
HistoryProgram ru_scenario();

}  // namespace histex
