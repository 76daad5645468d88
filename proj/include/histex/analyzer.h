#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "histex/notation.h"
#include "histex/outhist.h"

namespace histex {

enum class HistoryClass : std::uint8_t { W_W, W_R, R_W, W_PR, PR_W };

inline constexpr HistoryClass kAllClasses[] = {HistoryClass::W_W, HistoryClass::W_R, HistoryClass::R_W,
                                               HistoryClass::W_PR, HistoryClass::PR_W};

std::string_view class_name(HistoryClass cls);
std::optional<HistoryClass> class_from_name(std::string_view name);

/// Whether the second operation of a `cls` pair may run while the first transaction is
/// still open, given the first and second transactions' levels (both RC or above).
bool permitted(HistoryClass cls, IsolationLevel first, IsolationLevel second);

struct ConflictPair {
  HistoryClass cls = HistoryClass::W_W;
  std::size_t first = 0;   // record index of the first operation's completion
  std::size_t second = 0;  // record index of the second operation's first record
  TxnId first_txn = 0;
  TxnId second_txn = 0;
  std::string resource;  // "key:100" or "pred:P"
  bool concurrent = false;
  bool second_blocked = false;

  bool operator==(const ConflictPair &) const = default;
};

/// Every ordered pair of conflicting operations from different transactions in which the first
/// had completed when the second was submitted. Operations whose predicate membership cannot be
/// decided are listed in `undecided` instead.
std::vector<ConflictPair> detect_pairs(const OutputHistory &history, std::vector<std::string> *undecided = nullptr);

enum class VerdictKind : std::uint8_t { CONFORMS, VIOLATION, OVER_RESTRICTIVE, INCONCLUSIVE };

std::string_view verdict_name(VerdictKind kind);

struct Verdict {
  VerdictKind kind = VerdictKind::CONFORMS;
  std::vector<ConflictPair> violations;
  std::vector<ConflictPair> over_restrictive;
  std::vector<std::size_t> ru_writes;  // record indices of writes that succeeded at RU
  std::string reason;
};

/// Throws UnknownLevel when a pair's transaction has no level.
Verdict judge(const std::vector<ConflictPair> &pairs, const std::map<TxnId, IsolationLevel> &levels);

/// detect_pairs + judge + RU write findings over one output history.
Verdict analyze(const OutputHistory &history);

/// The class recorded in the metadata by the generator. Throws UnclassifiableHistory otherwise.
HistoryClass classify_history(const HistoryProgram &program);
std::optional<HistoryClass> class_from_metadata(const std::map<std::string, std::string> &metadata);

}  // namespace histex
