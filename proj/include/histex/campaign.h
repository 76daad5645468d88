#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "histex/analyzer.h"
#include "histex/executor.h"

namespace histex {

enum class CellOutcome : std::uint8_t { NONE, EXECUTED, BLOCKED, VIOLATION, OVER_RESTRICTIVE };

std::string_view outcome_name(CellOutcome outcome);

struct CampaignCell {
  HistoryClass cls = HistoryClass::W_W;
  IsolationLevel l1 = IsolationLevel::SR;
  IsolationLevel l2 = IsolationLevel::SR;
  std::string variant;
  std::string history;
  CellOutcome outcome = CellOutcome::NONE;
  VerdictKind verdict = VerdictKind::CONFORMS;
  bool stuck = false;
};

struct CampaignOptions {
  std::vector<HistoryClass> classes{std::begin(kAllClasses), std::end(kAllClasses)};
  std::vector<IsolationLevel> levels{IsolationLevel::RC, IsolationLevel::RR, IsolationLevel::SR};
  std::vector<std::string> variants;
  ExecutorConfig exec;
  int parallel = 1;
};

struct CampaignReport {
  std::vector<CampaignCell> cells;
  std::map<std::string, int> totals;  // outcome and verdict names -> counts
  std::vector<std::pair<std::string, std::string>> config;

  /// Any VIOLATION, OVER_RESTRICTIVE, INCONCLUSIVE or stuck history.
  bool has_findings() const;
  std::string render_grid() const;
  std::string to_json() const;
};

/// Outcome of one history for its intended class, from its output and verdict.
CellOutcome cell_outcome(HistoryClass cls, const OutputHistory &history, const Verdict &verdict);

CampaignReport run_campaign(const CampaignOptions &options);

}  // namespace histex
