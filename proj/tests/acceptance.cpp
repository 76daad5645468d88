// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "histex/analyzer.h"
#include "histex/executor.h"
#include "histex/generator.h"
#include "histex/outhist.h"

using namespace histex;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string &what) {
    if (!ok && failures.size() < 10) failures.push_back(what);
    if (!ok && failures.size() == 10) failures.push_back("...");
  }
  bool ok() const { return failures.empty(); }
};

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult cli(const std::string &args) {
  CliResult r;
  const std::string cmd = std::string(HISTEX_CLI) + " " + args + " 2>/dev/null";
  FILE *p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int st = ::pclose(p);
  r.exit_code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path &path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path &path, const std::string &text) { std::ofstream(path) << text; }

std::vector<std::string> split_lines(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split_on(const std::string &text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

fs::path g_tmp;

// Class/level-pair cells whose second operation may run while the first transaction is open.
const std::set<std::string> kPermittedCells = {
    "r_w RC_RC",  "r_w RC_RR",  "r_w RC_SR",  "pr_w RC_RC", "pr_w RC_RR",
    "pr_w RC_SR", "pr_w RR_RC", "pr_w RR_RR", "pr_w RR_SR",
};

// ---------------------------------------------------------------- AC1

Check ac1() {
  Check c;
  const auto t0 = Clock::now();
  auto r = cli("dataset dump --rows 200");
  const auto elapsed = Clock::now() - t0;
  c.expect(r.exit_code == 0, "dump exit code " + std::to_string(r.exit_code));
  auto lines = split_lines(r.out);
  c.expect(lines.size() == 201, "expected 201 lines, got " + std::to_string(lines.size()));
  auto golden = split_lines(slurp(fs::path(HISTEX_GOLDEN_DIR) / "table1_head.tsv"));
  c.expect(golden.size() == 7, "golden file should hold a header and six rows");
  for (std::size_t i = 0; i < golden.size() && i < lines.size(); ++i) {
    c.expect(lines[i] == golden[i], "line " + std::to_string(i + 1) + " differs from golden");
  }
  if (lines.empty()) return c;
  const auto header = split_on(lines[0], '\t');
  for (std::size_t i = 1; i <= 6 && i < lines.size(); ++i) {
    const auto cells = split_on(lines[i], '\t');
    c.expect(cells.size() == header.size(), "row " + std::to_string(i) + " width");
    for (std::size_t col = 0; col < cells.size() && col < header.size(); ++col) {
      const auto &name = header[col];
      long expected;
      if (name == "reckey") {
        expected = 100 * static_cast<long>(i);
      } else if (name == "recval") {
        expected = 10000 * static_cast<long>(i);
      } else {
        expected = static_cast<long>(i - 1) % std::stol(name.substr(1));
      }
      c.expect(std::stol(cells[col]) == expected, "row " + std::to_string(i) + " column " + name);
    }
  }
  c.expect(elapsed < std::chrono::seconds(1), "dump took over a second");
  return c;
}

// ---------------------------------------------------------------- AC2 / AC5

struct CampaignRun {
  int exit_code = -1;
  nlohmann::json report;
};

CampaignRun campaign(const std::string &flags, const std::string &tag) {
  const auto json_path = g_tmp / ("campaign-" + tag + ".json");
  auto r = cli("campaign --json " + json_path.string() + " " + flags);
  CampaignRun out;
  out.exit_code = r.exit_code;
  try {
    out.report = nlohmann::json::parse(slurp(json_path));
  } catch (const std::exception &) {
  }
  return out;
}

std::string cell_key(const nlohmann::json &cell) {
  return cell.at("class").get<std::string>() + " " + cell.at("l1").get<std::string>() + "_" +
         cell.at("l2").get<std::string>();
}

// The blocked operation of a single-conflict history completes only after T1's commit.
bool blocked_until_first_commit(const HistoryProgram &program) {
  auto result = run_history(program, {});
  const auto &recs = result.history.records;
  std::optional<std::size_t> blocked, resumed, commit1;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].status == RecordStatus::BLOCKED && !blocked) blocked = i;
    if (recs[i].status == RecordStatus::RESUMED && !resumed) resumed = i;
    if (recs[i].op == "C1" && recs[i].status == RecordStatus::OK) commit1 = i;
  }
  return blocked && resumed && commit1 && recs[*blocked].txn == 2 && *blocked < *commit1 && *commit1 < *resumed;
}

Check ac2() {
  Check c;
  const auto t0 = Clock::now();
  auto run = campaign("", "default");
  c.expect(Clock::now() - t0 < std::chrono::minutes(2), "campaign took over two minutes");
  c.expect(run.exit_code == 0, "campaign exit code " + std::to_string(run.exit_code));
  if (!run.report.contains("cells")) {
    c.expect(false, "no JSON report");
    return c;
  }
  const auto &cells = run.report.at("cells");
  c.expect(cells.size() == 45, "expected 45 cells, got " + std::to_string(cells.size()));
  std::set<std::string> seen;
  for (const auto &cell : cells) {
    const auto key = cell_key(cell);
    seen.insert(key);
    const auto outcome = cell.at("outcome").get<std::string>();
    const std::string expected = kPermittedCells.count(key) ? "EXECUTED" : "BLOCKED";
    c.expect(outcome == expected, key + " is " + outcome + ", expected " + expected);
    c.expect(cell.at("verdict") == "CONFORMS", key + " verdict " + cell.at("verdict").get<std::string>());
  }
  c.expect(seen.size() == 45, "duplicate cells");

  for (const auto &p : generate_matrix({std::begin(kMatrixLevels), std::end(kMatrixLevels)},
                                       {std::begin(kAllClasses), std::end(kAllClasses)})) {
    const auto key = p.metadata.at("class") + " " + p.metadata.at("l1") + "_" + p.metadata.at("l2");
    if (!kPermittedCells.count(key)) c.expect(blocked_until_first_commit(p), key + " not blocked until C1");
  }
  return c;
}

Check ac5() {
  Check c;
  auto run = campaign("--strictness strict", "strict");
  if (!run.report.contains("cells")) {
    c.expect(false, "no JSON report");
    return c;
  }
  int flagged = 0;
  for (const auto &cell : run.report.at("cells")) {
    const auto key = cell_key(cell);
    const auto outcome = cell.at("outcome").get<std::string>();
    if (outcome == "OVER_RESTRICTIVE") ++flagged;
    const std::string expected = kPermittedCells.count(key) ? "OVER_RESTRICTIVE" : "BLOCKED";
    c.expect(outcome == expected, key + " is " + outcome + ", expected " + expected);
  }
  c.expect(flagged == 9, "flagged " + std::to_string(flagged) + " cells");
  return c;
}

// ---------------------------------------------------------------- AC3

std::optional<OutputHistory> run_cli_history(const std::string &text, const std::string &flags, const std::string &tag) {
  const auto in = g_tmp / (tag + ".hist");
  const auto out = g_tmp / (tag + ".outhist");
  spit(in, text);
  auto r = cli("run " + in.string() + " -o " + out.string() + " " + flags);
  if (r.exit_code != 0) return std::nullopt;
  try {
    return parse_output(slurp(out));
  } catch (const std::exception &) {
    return std::nullopt;
  }
}

const OutputRecord *find_record(const OutputHistory &h, const std::string &prefix) {
  for (const auto &r : h.records) {
    if (r.op.rfind(prefix, 0) == 0) return &r;
  }
  return nullptr;
}

Check ac3() {
  Check c;
  const auto text = render_history(ru_scenario());
  auto enforced = run_cli_history(text, "", "ru-enforced");
  c.expect(enforced.has_value(), "RU scenario did not run");
  if (enforced) {
    auto w2 = find_record(*enforced, "W2(");
    c.expect(w2 && w2->status == RecordStatus::READONLY_VIOLATION, "W2 is not READONLY_VIOLATION");
  }
  auto allowed = run_cli_history(text, "--ru-writes-allowed", "ru-allowed");
  c.expect(allowed.has_value(), "RU scenario with writes allowed did not run");
  if (allowed) {
    // W2(A) without a value adds one to A's original recval; T3 copies what it read into B.
    const std::int64_t a_original = 10000;
    const std::int64_t written_by_t2 = a_original + 1;
    auto w2 = find_record(*allowed, "W2(");
    c.expect(w2 && w2->status == RecordStatus::OK, "W2 did not execute");
    auto r3 = find_record(*allowed, "R3(");
    c.expect(r3 && r3->values == std::vector<std::int64_t>{written_by_t2}, "R3 did not see T2's write");
    auto a2 = find_record(*allowed, "A2");
    c.expect(a2 && a2->status == RecordStatus::OK, "T2 did not abort");
    auto r4a = find_record(*allowed, "R4(A");
    c.expect(r4a && r4a->values == std::vector<std::int64_t>{a_original}, "R4(A) should see the undone value");
    auto r4b = find_record(*allowed, "R4(B");
    c.expect(r4b && r4b->values == std::vector<std::int64_t>{written_by_t2}, "R4(B) did not return T2's value");
    c.expect(allowed->final_status.at(2) == "ABORTED" && allowed->final_status.at(3) == "COMMITTED",
             "unexpected final statuses");
  }
  return c;
}

// ---------------------------------------------------------------- AC4

std::vector<std::string> markers(const OutputHistory &h) {
  std::vector<std::string> out;
  for (const auto &r : h.records) {
    std::string op = r.op.substr(0, r.op.find('('));
    std::string st(record_status_name(r.status));
    if (r.status == RecordStatus::RESUMED) st += "(" + std::to_string(*r.resumes) + ")";
    out.push_back(op + " " + st);
  }
  return out;
}

Check ac4() {
  Check c;
  const std::string text =
      "MAP(B, 700) PRED(P, k2=0 and k3=0) IL1(SR) IL2(SR) PR1(P;recval;1;A,X) W2(B) PR1(P;recval;all) C2 C1\n";
  const std::vector<std::string> incremental = {"IL1 OK",  "IL2 OK", "PR1 OK",         "W2 OK",
                                                "PR1 BLOCKED", "C2 OK", "PR1 RESUMED(5)", "C1 OK"};
  const std::vector<std::string> predicate = {"IL1 OK", "IL2 OK", "PR1 OK",        "W2 BLOCKED",
                                              "PR1 OK", "C1 OK",  "W2 RESUMED(4)", "C2 OK"};
  auto inc = run_cli_history(text, "--lock-scope incremental", "incremental");
  c.expect(inc.has_value(), "incremental run failed");
  if (inc) {
    c.expect(markers(*inc) == incremental, "incremental marker sequence differs");
    // The continued fetch, once resumed, sees T2's committed update of row 700.
    const auto &resumed = inc->records[6];
    c.expect(!resumed.rows.empty() && resumed.rows.front().key == 700 && resumed.rows.front().value == 70001,
             "resumed fetch did not return T2's update first");
  }
  auto pred = run_cli_history(text, "--lock-scope predicate", "predicate");
  c.expect(pred.has_value(), "predicate run failed");
  if (pred) c.expect(markers(*pred) == predicate, "predicate marker sequence differs");
  return c;
}

// ---------------------------------------------------------------- corpus and interleavings

std::vector<HistoryProgram> full_corpus() {
  const std::vector<IsolationLevel> levels{IsolationLevel::RU, IsolationLevel::RC, IsolationLevel::RR,
                                           IsolationLevel::SR};
  auto corpus = generate_matrix(levels, {std::begin(kAllClasses), std::end(kAllClasses)},
                                {"insert", "delete", "update", "partial"});
  corpus.push_back(ru_scenario());
  return corpus;
}

// Declarative steps first, then a uniformly random merge that keeps each transaction's order.
HistoryProgram interleave(const HistoryProgram &program, std::mt19937 &rng) {
  HistoryProgram out;
  out.source_name = program.source_name;
  std::map<TxnId, std::vector<Step>> per_txn;
  for (const auto &s : program.steps) {
    if (is_declarative(s.kind)) {
      out.steps.push_back(s);
    } else {
      per_txn[s.txn].push_back(s);
    }
  }
  std::map<TxnId, std::size_t> next;
  std::size_t remaining = 0;
  for (const auto &[t, steps] : per_txn) remaining += steps.size();
  while (remaining > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
    std::size_t k = pick(rng);
    for (const auto &[t, steps] : per_txn) {
      const std::size_t left = steps.size() - next[t];
      if (k < left) {
        out.steps.push_back(steps[next[t]++]);
        break;
      }
      k -= left;
    }
    --remaining;
  }
  return out;
}

// Second history's transactions become 3 and 4 so both run side by side over the same rows.
HistoryProgram combine(const HistoryProgram &a, const HistoryProgram &b) {
  HistoryProgram out;
  out.source_name = a.source_name + "+" + b.source_name;
  bool has_pred = false;
  for (const auto &s : a.steps) has_pred |= s.kind == OpKind::PRED;
  for (const auto &s : b.steps) {
    if (s.kind == OpKind::PRED && !has_pred) out.steps.push_back(s);
  }
  for (const auto &s : a.steps) out.steps.push_back(s);
  for (auto s : b.steps) {
    if (is_declarative(s.kind)) continue;
    s.txn += 2;
    if (s.value_var) *s.value_var += "b";
    out.steps.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------- AC6 oracle

struct OracleOp {
  std::size_t first = 0;
  std::size_t completion = 0;
  bool has_completion = false;
  bool executed = false;
  bool blocked = false;
  TxnId txn = 0;
  std::string name;  // operation letters, e.g. "PR"
  std::string pred;
  std::set<Key> keys;
  std::vector<OutputImage> images;
};

std::string op_letters(const std::string &op) {
  std::size_t i = 0;
  while (i < op.size() && std::isalpha(static_cast<unsigned char>(op[i]))) ++i;
  return op.substr(0, i);
}

bool oracle_write(const std::string &n) { return n == "W" || n == "RW" || n == "I" || n == "D" || n == "SU"; }
bool oracle_pred_read(const std::string &n) { return n == "PR" || n == "SS"; }

// Parses "k2=0 and k3<2 or reckey>=300" without parentheses.
bool oracle_eval(const std::string &expr, const Row &row) {
  auto trim = [](std::string s) {
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  auto split_word = [](const std::string &s, const std::string &word) {
    std::vector<std::string> parts;
    std::size_t start = 0, pos;
    while ((pos = s.find(word, start)) != std::string::npos) {
      parts.push_back(s.substr(start, pos - start));
      start = pos + word.size();
    }
    parts.push_back(s.substr(start));
    return parts;
  };
  if (expr.find('(') != std::string::npos) throw std::runtime_error("oracle cannot evaluate " + expr);
  for (const auto &disjunct : split_word(expr, " or ")) {
    bool all = true;
    for (auto atom : split_word(disjunct, " and ")) {
      atom = trim(atom);
      std::size_t p = atom.find_first_of("<>=!");
      std::size_t q = atom.find_first_not_of("<>=!", p);
      const std::string col = atom.substr(0, p), op = atom.substr(p, q - p);
      const long rhs = std::stol(atom.substr(q));
      const auto column = column_from_name(col);
      if (!column) throw std::runtime_error("oracle: unknown column " + col);
      const long lhs = row.get(*column);
      bool v = op == "=" ? lhs == rhs
               : op == "<" ? lhs < rhs
               : op == ">" ? lhs > rhs
               : op == "<=" ? lhs <= rhs
               : op == ">=" ? lhs >= rhs
                             : lhs != rhs;
      all = all && v;
    }
    if (all) return true;
  }
  return false;
}

std::vector<ConflictPair> oracle_pairs(const OutputHistory &h) {
  std::vector<OracleOp> ops;
  // A record continues an earlier BLOCKED one when it names that record's seq.
  for (std::size_t i = 0; i < h.records.size(); ++i) {
    const auto &r = h.records[i];
    bool continuation = false;
    if (r.resumes) {
      for (auto &op : ops) {
        if (op.blocked && !op.has_completion && h.records[op.first].seq == *r.resumes) {
          op.completion = i;
          op.has_completion = true;
          op.executed = r.status == RecordStatus::OK || r.status == RecordStatus::RESUMED;
          op.images = r.images;
          continuation = true;
        }
      }
    }
    if (continuation) continue;
    OracleOp op;
    op.first = i;
    op.txn = r.txn;
    op.name = op_letters(r.op);
    op.blocked = r.status == RecordStatus::BLOCKED;
    if (!op.blocked) {
      op.completion = i;
      op.has_completion = true;
      op.executed = r.status == RecordStatus::OK;
      op.images = r.images;
    }
    const auto open = r.op.find('(');
    if (open != std::string::npos) {
      const auto body = r.op.substr(open + 1);
      const auto first_arg = body.substr(0, body.find_first_of(";,)"));
      if (oracle_pred_read(op.name) || op.name == "SU") {
        op.pred = first_arg;
      }
      const auto eq = first_arg.find('=');
      if (eq != std::string::npos && !oracle_pred_read(op.name) && op.name != "SU") {
        op.keys.insert(std::stol(first_arg.substr(eq + 1)));
      }
    }
    ops.push_back(op);
  }
  for (auto &op : ops) {
    for (const auto &img : op.images) op.keys.insert(img.before ? img.before->key() : img.after->key());
  }

  auto terminated_at = [&](TxnId txn, std::size_t after) -> std::size_t {
    for (std::size_t i = after + 1; i < h.records.size(); ++i) {
      const auto &r = h.records[i];
      if (r.txn != txn) continue;
      if (r.status == RecordStatus::ABORTED_DEADLOCK) return i;
      const auto n = op_letters(r.op);
      if ((n == "C" || n == "A") && (r.status == RecordStatus::OK || r.status == RecordStatus::RESUMED)) return i;
    }
    return h.records.size();
  };
  auto touches = [&](const OracleOp &write, const std::string &pred) {
    auto it = h.predicates.find(pred);
    if (it == h.predicates.end()) return false;
    for (const auto &img : write.images) {
      if ((img.before && oracle_eval(it->second, *img.before)) || (img.after && oracle_eval(it->second, *img.after))) {
        return true;
      }
    }
    return false;
  };

  std::vector<ConflictPair> out;
  for (const auto &a : ops) {
    for (const auto &b : ops) {
      if (!a.executed || a.txn == b.txn || b.first <= a.completion) continue;
      if (!b.executed && !b.blocked) continue;
      std::set<Key> common;
      for (Key k : a.keys) {
        if (b.keys.count(k)) common.insert(k);
      }
      std::optional<HistoryClass> cls;
      std::string resource;
      const bool aw = oracle_write(a.name), bw = oracle_write(b.name);
      if (aw && bw && !common.empty()) cls = HistoryClass::W_W;
      if (aw && b.name == "R" && !common.empty()) cls = HistoryClass::W_R;
      if (a.name == "R" && bw && !common.empty()) cls = HistoryClass::R_W;
      if (cls) resource = "key:*";
      if (aw && oracle_pred_read(b.name) && touches(a, b.pred)) {
        cls = HistoryClass::W_PR;
        resource = "pred:" + b.pred;
      }
      if (oracle_pred_read(a.name) && bw && touches(b, a.pred)) {
        cls = HistoryClass::PR_W;
        resource = "pred:" + a.pred;
      }
      if (!cls) continue;
      ConflictPair p;
      p.cls = *cls;
      p.first = a.completion;
      p.second = b.first;
      p.first_txn = a.txn;
      p.second_txn = b.txn;
      p.resource = resource;
      p.concurrent = b.executed && b.completion < terminated_at(a.txn, a.completion);
      p.second_blocked = b.blocked;
      if (p.resource == "key:*") {
        // Any shared key is an acceptable name for the resource.
        p.resource.clear();
        for (Key k : common) p.resource += "key:" + std::to_string(k) + "|";
      }
      out.push_back(p);
    }
  }
  return out;
}

bool same_pairs(std::vector<ConflictPair> got, std::vector<ConflictPair> want) {
  auto order = [](const ConflictPair &x, const ConflictPair &y) {
    return std::tie(x.first, x.second, x.cls) < std::tie(y.first, y.second, y.cls);
  };
  std::sort(got.begin(), got.end(), order);
  std::sort(want.begin(), want.end(), order);
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto &g = got[i];
    const auto &w = want[i];
    if (g.cls != w.cls || g.first != w.first || g.second != w.second || g.first_txn != w.first_txn ||
        g.second_txn != w.second_txn || g.concurrent != w.concurrent || g.second_blocked != w.second_blocked) {
      return false;
    }
    if (w.resource.rfind("pred:", 0) == 0) {
      if (g.resource != w.resource) return false;
    } else if (w.resource.find(g.resource + "|") == std::string::npos) {
      return false;
    }
  }
  return true;
}

std::size_t transactional_ops(const HistoryProgram &p) {
  return static_cast<std::size_t>(
      std::count_if(p.steps.begin(), p.steps.end(), [](const Step &s) { return !is_declarative(s.kind); }));
}

std::vector<ExecutorConfig> oracle_configs() {
  std::vector<ExecutorConfig> configs(5);
  for (auto &c : configs) c.timeout = std::chrono::milliseconds(500);
  configs[1].engine.strictness = Strictness::STRICT_ALL_LONG;
  configs[2].engine.lock_scope = LockScope::INCREMENTAL_RANGE;
  configs[3].engine.skip_read_locks = true;
  configs[3].engine.ru_writes_allowed = true;
  configs[4].mode = ExecMode::ASYNC;
  return configs;
}

Check ac6(std::size_t &compared, std::size_t &nonempty) {
  Check c;
  std::mt19937 rng(6);
  const auto configs = oracle_configs();
  for (const auto &base : full_corpus()) {
    if (transactional_ops(base) > 6) continue;
    std::vector<HistoryProgram> variants{base};
    for (int k = 0; k < 4; ++k) variants.push_back(interleave(base, rng));
    for (const auto &program : variants) {
      for (const auto &cfg : configs) {
        auto result = run_history(program, cfg);
        // Compare what the analyzer sees after the history went through its file form.
        const auto h = parse_output(serialize(result.history));
        std::vector<ConflictPair> want;
        try {
          want = oracle_pairs(h);
        } catch (const std::exception &e) {
          c.expect(false, program.source_name + ": " + e.what());
          continue;
        }
        const auto got = detect_pairs(h);
        ++compared;
        if (!want.empty()) ++nonempty;
        c.expect(same_pairs(got, want), program.source_name + " (" + render_history(program) + ")");
      }
    }
  }
  c.expect(nonempty > 0, "oracle never found a pair");
  return c;
}

// ---------------------------------------------------------------- AC7 property checks

Row oracle_row(std::int64_t i) {
  Row r;
  r.set(Column::RECKEY, 100 * i);
  r.set(Column::RECVAL, 10000 * i);
  for (auto [c, k, n] : {std::tuple{Column::C2, Column::K2, 2}, {Column::C3, Column::K3, 3}, {Column::C4, Column::K4, 4},
                         {Column::C5, Column::K5, 5}, {Column::C6, Column::K6, 6}, {Column::C50, Column::K50, 50},
                         {Column::C100, Column::K100, 100}}) {
    r.set(c, (i - 1) % n);
    r.set(k, (i - 1) % n);
  }
  return r;
}

struct Replay {
  std::map<Key, Row> committed;
  std::map<TxnId, std::vector<OutputImage>> pending;
};

// Walks records in order; returns a description of the first dirty read at RC or above.
std::optional<std::string> dirty_read_and_replay(const OutputHistory &h, std::int64_t rows, Replay &replay) {
  for (std::int64_t i = 1; i <= rows; ++i) replay.committed[100 * i] = oracle_row(i);
  auto own_value = [&](TxnId txn, Key key) -> std::optional<std::optional<Row>> {
    auto it = replay.pending.find(txn);
    if (it == replay.pending.end()) return std::nullopt;
    std::optional<std::optional<Row>> latest;
    for (const auto &img : it->second) {
      const Key k = img.before ? img.before->key() : img.after->key();
      if (k == key) latest = img.after;
    }
    return latest;
  };
  auto check_value = [&](TxnId txn, Key key, std::int64_t value) -> bool {
    if (auto own = own_value(txn, key)) return *own && (*own)->get(Column::RECVAL) == value;
    auto it = replay.committed.find(key);
    return it != replay.committed.end() && it->second.get(Column::RECVAL) == value;
  };

  std::optional<std::string> dirty;
  for (const auto &r : h.records) {
    const auto name = op_letters(r.op);
    const bool executed = r.status == RecordStatus::OK || r.status == RecordStatus::RESUMED;
    auto level = h.levels.count(r.txn) ? h.levels.at(r.txn) : IsolationLevel::SR;
    if (executed && level != IsolationLevel::RU && !dirty) {
      if ((name == "R" || name == "RW") && r.values.size() == 1) {
        auto target = describe_op(r.op);
        if (target.key && !check_value(r.txn, *target.key, r.values[0])) dirty = r.op;
      }
      if (name == "PR") {
        for (const auto &row : r.rows) {
          if (row.value && !check_value(r.txn, row.key, *row.value)) dirty = r.op;
        }
      }
    }
    if (executed) {
      for (const auto &img : r.images) replay.pending[r.txn].push_back(img);
    }
    if (executed && name == "C") {
      for (const auto &img : replay.pending[r.txn]) {
        const Key k = img.before ? img.before->key() : img.after->key();
        if (img.after) {
          replay.committed[k] = *img.after;
        } else {
          replay.committed.erase(k);
        }
      }
      replay.pending.erase(r.txn);
    }
    if ((executed && name == "A") || r.status == RecordStatus::ABORTED_DEADLOCK) replay.pending.erase(r.txn);
  }
  return dirty;
}

std::optional<std::string> two_phase_violation(const ExecutionResult &result) {
  std::map<TxnId, bool> shrinking;
  for (const auto &ev : result.lock_events) {
    if (ev.acquire && ev.mode == LockMode::X && ev.duration != LockDuration::LONG) {
      return "short X lock for T" + std::to_string(ev.txn);
    }
    if (ev.acquire && shrinking[ev.txn]) return "T" + std::to_string(ev.txn) + " acquired after releasing";
    if (!ev.acquire && ev.duration == LockDuration::LONG) shrinking[ev.txn] = true;
    auto lvl = result.history.levels.find(ev.txn);
    if (ev.acquire && lvl != result.history.levels.end()) {
      if (lvl->second == IsolationLevel::SR && ev.duration != LockDuration::LONG) {
        return "short lock at SR for T" + std::to_string(ev.txn);
      }
      if (lvl->second == IsolationLevel::RU && ev.mode == LockMode::S) {
        return "read lock at RU for T" + std::to_string(ev.txn);
      }
    }
  }
  return std::nullopt;
}

HistoryProgram deadlock_history(int cycle, std::mt19937 &rng, std::vector<IsolationLevel> &levels) {
  const std::string vars = "ABC";
  std::vector<std::string> first_writes, second_writes, commits;
  std::string text;
  for (int t = 1; t <= cycle; ++t) {
    text += "IL" + std::to_string(t) + "(" + std::string(level_name(levels[t - 1])) + ") ";
    first_writes.push_back("W" + std::to_string(t) + "(" + vars[t - 1] + ")");
    second_writes.push_back("W" + std::to_string(t) + "(" + vars[t % cycle] + ")");
    commits.push_back("C" + std::to_string(t));
  }
  std::shuffle(first_writes.begin(), first_writes.end(), rng);
  std::shuffle(second_writes.begin(), second_writes.end(), rng);
  std::shuffle(commits.begin(), commits.end(), rng);
  for (const auto &s : first_writes) text += s + " ";
  for (const auto &s : second_writes) text += s + " ";
  for (const auto &s : commits) text += s + " ";
  return parse_history(text, "deadlock-" + std::to_string(cycle));
}

Check ac7(int &runs, int &deadlocks) {
  Check c;
  std::mt19937 rng(7);
  const auto corpus = full_corpus();
  std::vector<HistoryProgram> bases;
  for (const auto &p : corpus) {
    if (p.source_name != "ru-scenario") bases.push_back(p);
  }
  const std::vector<IsolationLevel> commit_levels{IsolationLevel::RC, IsolationLevel::RR, IsolationLevel::SR};

  for (runs = 0; runs < 1000; ++runs) {
    ExecutorConfig cfg;
    cfg.mode = ExecMode::SYNC;
    cfg.timeout = std::chrono::milliseconds(500);
    cfg.engine.lock_scope = rng() % 2 ? LockScope::PREDICATE : LockScope::INCREMENTAL_RANGE;
    cfg.engine.strictness = rng() % 4 == 0 ? Strictness::STRICT_ALL_LONG : Strictness::PER_LEVEL;
    cfg.engine.victim_rule = rng() % 2 ? VictimRule::YOUNGEST : VictimRule::REQUESTER;

    if (runs % 5 == 4) {
      const int cycle = runs % 10 == 4 ? 2 : 3;
      std::vector<IsolationLevel> levels;
      for (int t = 0; t < cycle; ++t) levels.push_back(commit_levels[rng() % 3]);
      const auto program = deadlock_history(cycle, rng, levels);
      auto result = run_history(program, cfg);
      ++deadlocks;
      int victims = 0, committed = 0;
      for (const auto &[t, s] : result.history.final_status) {
        victims += s == "ABORTED_DEADLOCK";
        committed += s == "COMMITTED";
      }
      const std::string name = render_history(program);
      c.expect(!result.stuck, "deadlock history stuck: " + name);
      c.expect(victims == 1, std::to_string(victims) + " victims: " + name);
      c.expect(committed == cycle - 1, "survivors did not commit: " + name);
      continue;
    }

    HistoryProgram program;
    if (runs % 3 == 0) {
      program = combine(bases[rng() % bases.size()], bases[rng() % bases.size()]);
    } else {
      program = bases[rng() % bases.size()];
    }
    program = interleave(program, rng);
    // Some transactions roll back instead, so undo runs on every kind of write.
    for (auto &s : program.steps) {
      if (s.kind == OpKind::C && rng() % 3 == 0) s.kind = OpKind::A;
    }
    auto result = run_history(program, cfg);
    const std::string name = program.source_name + ": " + render_history(program);
    c.expect(!result.stuck, "stuck: " + name);
    if (auto v = two_phase_violation(result)) c.expect(false, *v + " in " + name);
    Replay replay;
    if (auto d = dirty_read_and_replay(result.history, cfg.rows, replay)) c.expect(false, "dirty read " + *d + " in " + name);
    std::map<Key, Row> actual;
    for (const auto &[k, row] : result.final_table.rows) actual[k] = row;
    c.expect(actual == replay.committed, "final table differs from committed replay: " + name);
  }

  // The dirty-read check must notice reads that skip their locks.
  ExecutorConfig faulty;
  faulty.engine.skip_read_locks = true;
  auto leak = run_history(instantiate(HistoryClass::W_R, IsolationLevel::RC, IsolationLevel::RC), faulty);
  Replay replay;
  c.expect(dirty_read_and_replay(leak.history, faulty.rows, replay).has_value(), "dirty read check is vacuous");
  return c;
}

// ---------------------------------------------------------------- AC8

Check ac8(std::size_t &programs, std::size_t &outputs) {
  Check c;
  std::vector<HistoryProgram> corpus = full_corpus();
  std::mt19937 rng(8);
  const auto n = corpus.size();
  for (std::size_t i = 0; i < n; ++i) corpus.push_back(interleave(corpus[i], rng));
  for (const auto &p : corpus) {
    const auto text = render_history(p);
    HistoryProgram back;
    try {
      back = parse_history(text, p.source_name);
    } catch (const std::exception &e) {
      c.expect(false, p.source_name + ": " + e.what());
      continue;
    }
    ++programs;
    c.expect(back == p, "parse(render) differs for " + p.source_name);
    c.expect(render_history(back) == text, "render not stable for " + p.source_name);
  }

  auto check_output = [&](const OutputHistory &h, const std::string &name) {
    const auto text = serialize(h);
    try {
      auto back = parse_output(text);
      c.expect(back == h, "parse_output(serialize) differs for " + name);
      c.expect(serialize(back) == text, "serialize not stable for " + name);
    } catch (const std::exception &e) {
      c.expect(false, name + ": " + e.what());
    }
    ++outputs;
  };
  for (const auto &cfg : oracle_configs()) {
    for (std::size_t i = 0; i < n; ++i) check_output(run_history(corpus[i], cfg).history, corpus[i].source_name);
  }
  // Files written by the CLI.
  for (const auto &entry : fs::directory_iterator(g_tmp)) {
    if (entry.path().extension() != ".outhist") continue;
    const auto text = slurp(entry.path());
    try {
      auto h = parse_output(text);
      c.expect(serialize(h) == text, "file does not reproduce: " + entry.path().filename().string());
      c.expect(parse_output(serialize(h)) == h, "file does not round trip: " + entry.path().filename().string());
    } catch (const std::exception &e) {
      c.expect(false, entry.path().filename().string() + ": " + e.what());
    }
    ++outputs;
  }
  return c;
}

bool report(const std::string &id, const std::string &title, const Check &c, const std::string &detail) {
  std::cout << (c.ok() ? "PASS " : "FAIL ") << id << " " << title;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  for (const auto &f : c.failures) std::cout << "    " << f << "\n";
  std::cout.flush();
  return c.ok();
}

}  // namespace

int main() {
  g_tmp = fs::temp_directory_path() / ("histex-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(g_tmp);
  bool ok = true;

  ok &= report("AC1", "canonical table dump matches the golden rows", ac1(), "");
  ok &= report("AC2", "default campaign matches the permitted-pair grid", ac2(), "45 histories");
  ok &= report("AC3", "RU scenario", ac3(), "");
  ok &= report("AC4", "incremental cursor markers", ac4(), "");
  ok &= report("AC5", "strict campaign flags the permitted cells", ac5(), "");
  {
    std::size_t compared = 0, nonempty = 0;
    auto c = ac6(compared, nonempty);
    ok &= report("AC6", "detect_pairs agrees with brute-force oracle", c,
                 std::to_string(compared) + " histories, " + std::to_string(nonempty) + " with pairs");
  }
  {
    int runs = 0, deadlocks = 0;
    auto c = ac7(runs, deadlocks);
    ok &= report("AC7", "engine properties over randomized interleavings", c,
                 std::to_string(runs) + " runs, " + std::to_string(deadlocks) + " deadlock constructions");
  }
  {
    std::size_t programs = 0, outputs = 0;
    auto c = ac8(programs, outputs);
    ok &= report("AC8", "round trips", c,
                 std::to_string(programs) + " programs, " + std::to_string(outputs) + " output histories");
  }

  std::error_code ec;
  fs::remove_all(g_tmp, ec);
  return ok ? 0 : 1;
}
