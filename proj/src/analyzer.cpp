#include "histex/analyzer.h"

#include <algorithm>

#include "histex/errors.h"

namespace histex {

namespace {

constexpr std::pair<HistoryClass, std::string_view> kClassNames[] = {
    {HistoryClass::W_W, "w_w"}, {HistoryClass::W_R, "w_r"}, {HistoryClass::R_W, "r_w"},
    {HistoryClass::W_PR, "w_pr"}, {HistoryClass::PR_W, "pr_w"},
};

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

struct OpView {
  std::size_t first = 0;
  std::size_t completion = kNone;
  TxnId txn = 0;
  OpTarget target;
  bool executed = false;
  bool blocked = false;
  std::vector<Key> keys;  // rows written or read by an item operation
  std::vector<OutputImage> images;
};

bool is_predicate_read(OpKind k) { return k == OpKind::PR || k == OpKind::SS; }

std::vector<OpView> collect_ops(const OutputHistory &h) {
  std::vector<OpView> ops;
  std::map<std::uint64_t, std::size_t> by_blocked_seq;
  for (std::size_t i = 0; i < h.records.size(); ++i) {
    const auto &r = h.records[i];
    if (r.resumes) {
      auto it = by_blocked_seq.find(*r.resumes);
      if (it != by_blocked_seq.end()) {
        auto &op = ops[it->second];
        op.completion = i;
        op.executed = r.executed();
        op.images = r.images;
        op.target = describe_op(r.op);
        continue;
      }
    }
    OpView op;
    op.first = i;
    op.txn = r.txn;
    op.target = describe_op(r.op);
    if (r.status == RecordStatus::BLOCKED) {
      op.blocked = true;
      by_blocked_seq[r.seq] = ops.size();
    } else {
      op.completion = i;
      op.executed = r.executed();
      op.images = r.images;
    }
    ops.push_back(std::move(op));
  }
  for (auto &op : ops) {
    if (op.target.key) op.keys.push_back(*op.target.key);
    for (const auto &img : op.images) {
      const Key k = img.before ? img.before->key() : img.after->key();
      if (std::find(op.keys.begin(), op.keys.end(), k) == op.keys.end()) op.keys.push_back(k);
    }
  }
  return ops;
}

std::size_t termination_after(const OutputHistory &h, TxnId txn, std::size_t after) {
  for (std::size_t i = after + 1; i < h.records.size(); ++i) {
    const auto &r = h.records[i];
    if (r.txn != txn) continue;
    if (r.status == RecordStatus::ABORTED_DEADLOCK) return i;
    const auto kind = describe_op(r.op).kind;
    if ((kind == OpKind::C || kind == OpKind::A) && r.executed()) return i;
  }
  return kNone;
}

std::optional<Key> common_key(const OpView &a, const OpView &b) {
  for (Key k : a.keys) {
    if (std::find(b.keys.begin(), b.keys.end(), k) != b.keys.end()) return k;
  }
  return std::nullopt;
}

}  // namespace

std::string_view class_name(HistoryClass cls) {
  for (const auto &[c, n] : kClassNames) {
    if (c == cls) return n;
  }
  return "";
}

std::optional<HistoryClass> class_from_name(std::string_view name) {
  for (const auto &[c, n] : kClassNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

bool permitted(HistoryClass cls, IsolationLevel first, IsolationLevel /*second*/) {
  switch (cls) {
    case HistoryClass::R_W:
      return first == IsolationLevel::RC;
    case HistoryClass::PR_W:
      return first == IsolationLevel::RC || first == IsolationLevel::RR;
    default:
      return false;
  }
}

std::string_view verdict_name(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::CONFORMS:
      return "CONFORMS";
    case VerdictKind::VIOLATION:
      return "VIOLATION";
    case VerdictKind::OVER_RESTRICTIVE:
      return "OVER_RESTRICTIVE";
    case VerdictKind::INCONCLUSIVE:
      return "INCONCLUSIVE";
  }
  return "";
}

std::vector<ConflictPair> detect_pairs(const OutputHistory &h, std::vector<std::string> *undecided) {
  std::map<std::string, PredicateExpr> preds;
  for (const auto &[var, text] : h.predicates) preds.emplace(var, parse_predicate(text));

  const auto ops = collect_ops(h);
  std::vector<ConflictPair> pairs;
  auto note = [&](const std::string &what) {
    if (undecided && std::find(undecided->begin(), undecided->end(), what) == undecided->end()) {
      undecided->push_back(what);
    }
  };
  // Some image of the write satisfies the predicate. nullopt when undecidable.
  auto changes = [&](const OpView &write, const OpView &reader) -> std::optional<bool> {
    auto it = reader.target.pred_var ? preds.find(*reader.target.pred_var) : preds.end();
    if (it == preds.end()) {
      note("predicate of " + h.records[reader.first].op);
      return std::nullopt;
    }
    if (write.images.empty()) {
      note("images of " + h.records[write.first].op);
      return std::nullopt;
    }
    for (const auto &img : write.images) {
      if ((img.before && eval_predicate(*img.before, it->second)) ||
          (img.after && eval_predicate(*img.after, it->second))) {
        return true;
      }
    }
    return false;
  };

  for (const auto &a : ops) {
    if (!a.executed) continue;
    const auto ka = a.target.kind;
    const std::size_t end = termination_after(h, a.txn, a.completion);
    for (const auto &b : ops) {
      if (b.txn == a.txn || b.first <= a.completion) continue;
      if (!b.executed && !b.blocked) continue;
      const auto kb = b.target.kind;
      std::optional<HistoryClass> cls;
      std::string resource;
      if (is_write(ka) && is_write(kb)) {
        if (auto k = common_key(a, b)) {
          cls = HistoryClass::W_W;
          resource = "key:" + std::to_string(*k);
        } else if (b.keys.empty()) {
          note("rows of " + h.records[b.first].op);
        }
      } else if (is_write(ka) && kb == OpKind::R) {
        if (auto k = common_key(a, b)) {
          cls = HistoryClass::W_R;
          resource = "key:" + std::to_string(*k);
        }
      } else if (ka == OpKind::R && is_write(kb)) {
        if (auto k = common_key(a, b)) {
          cls = HistoryClass::R_W;
          resource = "key:" + std::to_string(*k);
        } else if (b.keys.empty()) {
          note("rows of " + h.records[b.first].op);
        }
      } else if (is_write(ka) && is_predicate_read(kb)) {
        if (changes(a, b).value_or(false)) {
          cls = HistoryClass::W_PR;
          resource = "pred:" + *b.target.pred_var;
        }
      } else if (is_predicate_read(ka) && is_write(kb)) {
        if (changes(b, a).value_or(false)) {
          cls = HistoryClass::PR_W;
          resource = "pred:" + *a.target.pred_var;
        }
      }
      if (!cls) continue;
      ConflictPair p;
      p.cls = *cls;
      p.first = a.completion;
      p.second = b.first;
      p.first_txn = a.txn;
      p.second_txn = b.txn;
      p.resource = resource;
      p.concurrent = b.executed && (end == kNone || b.completion < end);
      p.second_blocked = b.blocked;
      pairs.push_back(p);
    }
  }
  return pairs;
}

Verdict judge(const std::vector<ConflictPair> &pairs, const std::map<TxnId, IsolationLevel> &levels) {
  Verdict v;
  auto level = [&](TxnId t) {
    auto it = levels.find(t);
    if (it == levels.end()) throw UnknownLevel("no isolation level for transaction " + std::to_string(t));
    return it->second;
  };
  for (const auto &p : pairs) {
    const auto l1 = level(p.first_txn);
    const auto l2 = level(p.second_txn);
    if (l1 == IsolationLevel::RU || l2 == IsolationLevel::RU) continue;
    const bool ok = permitted(p.cls, l1, l2);
    if (p.concurrent && !ok) v.violations.push_back(p);
    if (!p.concurrent && p.second_blocked && ok) v.over_restrictive.push_back(p);
  }
  if (!v.violations.empty()) {
    v.kind = VerdictKind::VIOLATION;
  } else if (!v.over_restrictive.empty()) {
    v.kind = VerdictKind::OVER_RESTRICTIVE;
  }
  return v;
}

Verdict analyze(const OutputHistory &h) {
  std::vector<std::string> undecided;
  const auto pairs = detect_pairs(h, &undecided);
  Verdict v = judge(pairs, h.levels);
  for (std::size_t i = 0; i < h.records.size(); ++i) {
    const auto &r = h.records[i];
    auto it = h.levels.find(r.txn);
    if (it != h.levels.end() && it->second == IsolationLevel::RU && r.executed() && is_write(describe_op(r.op).kind)) {
      v.ru_writes.push_back(i);
    }
  }
  if (!v.ru_writes.empty()) v.kind = VerdictKind::VIOLATION;
  if (v.kind == VerdictKind::CONFORMS && !undecided.empty()) {
    v.kind = VerdictKind::INCONCLUSIVE;
    v.reason = "missing " + undecided.front();
  }
  return v;
}

std::optional<HistoryClass> class_from_metadata(const std::map<std::string, std::string> &metadata) {
  auto it = metadata.find("class");
  if (it == metadata.end()) return std::nullopt;
  return class_from_name(it->second);
}

HistoryClass classify_history(const HistoryProgram &program) {
  if (auto c = class_from_metadata(program.metadata)) return *c;
  throw UnclassifiableHistory("history '" + program.source_name + "' carries no class metadata");
}

}  // namespace histex
