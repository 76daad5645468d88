#include "histex/campaign.h"

#include <algorithm>
#include <atomic>
#include <thread>

#include <json.hpp>

#include "histex/generator.h"

namespace histex {

std::string_view outcome_name(CellOutcome outcome) {
  switch (outcome) {
    case CellOutcome::NONE:
      return "NONE";
    case CellOutcome::EXECUTED:
      return "EXECUTED";
    case CellOutcome::BLOCKED:
      return "BLOCKED";
    case CellOutcome::VIOLATION:
      return "VIOLATION";
    case CellOutcome::OVER_RESTRICTIVE:
      return "OVER_RESTRICTIVE";
  }
  return "";
}

CellOutcome cell_outcome(HistoryClass cls, const OutputHistory &history, const Verdict &verdict) {
  if (!verdict.violations.empty() || !verdict.ru_writes.empty()) return CellOutcome::VIOLATION;
  if (!verdict.over_restrictive.empty()) return CellOutcome::OVER_RESTRICTIVE;
  bool blocked = false;
  for (const auto &p : detect_pairs(history)) {
    if (p.cls != cls) continue;
    if (p.concurrent) return CellOutcome::EXECUTED;
    blocked = blocked || p.second_blocked;
  }
  return blocked ? CellOutcome::BLOCKED : CellOutcome::NONE;
}

bool CampaignReport::has_findings() const {
  return std::any_of(cells.begin(), cells.end(), [](const CampaignCell &c) {
    return c.stuck || c.verdict != VerdictKind::CONFORMS;
  });
}

std::string CampaignReport::render_grid() const {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::string, std::string>, std::string> grid;
  for (const auto &c : cells) {
    std::string row(class_name(c.cls));
    if (c.variant != "default") row += "/" + c.variant;
    const std::string col = std::string(level_name(c.l1)) + "_" + std::string(level_name(c.l2));
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
    std::string text(outcome_name(c.outcome));
    if (c.stuck) text += "*";
    grid[{row, col}] = text;
  }
  std::size_t w0 = 5, w = 6;
  for (const auto &r : rows) w0 = std::max(w0, r.size());
  for (const auto &[_, t] : grid) w = std::max(w, t.size());
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(n, s.size()), ' ');
    return s;
  };
  std::string out = pad("class", w0);
  for (const auto &c : cols) out += "  " + pad(c, w);
  while (out.back() == ' ') out.pop_back();
  out += "\n";
  for (const auto &r : rows) {
    std::string line = pad(r, w0);
    for (const auto &c : cols) {
      auto it = grid.find({r, c});
      line += "  " + pad(it == grid.end() ? "-" : it->second, w);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  out += "\n";
  for (const auto &[k, v] : totals) out += k + ": " + std::to_string(v) + "\n";
  return out;
}

std::string CampaignReport::to_json() const {
  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::object();
  for (const auto &[k, v] : config) j["config"][k] = v;
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto &c : cells) {
    j["cells"].push_back({
        {"class", class_name(c.cls)},
        {"l1", level_name(c.l1)},
        {"l2", level_name(c.l2)},
        {"variant", c.variant},
        {"history", c.history},
        {"outcome", outcome_name(c.outcome)},
        {"verdict", verdict_name(c.verdict)},
        {"stuck", c.stuck},
    });
  }
  j["totals"] = totals;
  return j.dump(2) + "\n";
}

CampaignReport run_campaign(const CampaignOptions &options) {
  const auto programs = generate_matrix(options.levels, options.classes, options.variants);
  CampaignReport report;
  report.config = config_echo(options.exec);
  report.cells.resize(programs.size());

  auto run_one = [&](std::size_t i) {
    const auto &p = programs[i];
    auto result = run_history(p, options.exec);
    auto verdict = analyze(result.history);
    auto &cell = report.cells[i];
    cell.cls = classify_history(p);
    cell.l1 = *level_from_name(p.metadata.at("l1"));
    cell.l2 = *level_from_name(p.metadata.at("l2"));
    cell.variant = p.metadata.at("variant");
    cell.history = p.source_name;
    cell.verdict = verdict.kind;
    cell.stuck = result.stuck;
    cell.outcome = cell_outcome(cell.cls, result.history, verdict);
  };

  const int threads = std::max(1, options.parallel);
  if (threads == 1) {
    for (std::size_t i = 0; i < programs.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < programs.size(); i = next++) run_one(i);
      });
    }
    for (auto &t : pool) t.join();
  }

  for (const auto &c : report.cells) {
    ++report.totals[std::string(outcome_name(c.outcome))];
    ++report.totals[std::string(verdict_name(c.verdict))];
    if (c.stuck) ++report.totals["STUCK"];
  }
  return report;
}

}  // namespace histex
