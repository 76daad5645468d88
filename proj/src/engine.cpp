#include "histex/engine.h"

#include <algorithm>
#include <set>

namespace histex {

namespace {

constexpr std::pair<Status, std::string_view> kStatusNames[] = {
    {Status::OK, "OK"},
    {Status::ROW_NOT_FOUND, "RowNotFound"},
    {Status::DUPLICATE_KEY, "DuplicateKey"},
    {Status::READ_ONLY_VIOLATION, "ReadOnlyViolation"},
    {Status::DEADLOCK_ABORT, "Deadlock"},
    {Status::CURSOR_LIMIT_EXCEEDED, "CursorLimitExceeded"},
    {Status::UNKNOWN_TXN, "UnknownTxn"},
    {Status::DUPLICATE_TXN, "DuplicateTxn"},
    {Status::TXN_ABORTED, "TxnAborted"},
    {Status::WOULD_BLOCK, "WouldBlock"},
    {Status::CANCELLED, "Cancelled"},
    {Status::INVALID_ARGUMENT, "InvalidArgument"},
};

LockResource item(Key key) {
  LockResource r;
  r.kind = LockResource::Kind::ITEM;
  r.key = key;
  return r;
}

bool same_resource(const LockResource &a, const LockResource &b) {
  if (a.kind != b.kind) return false;
  if (a.kind == LockResource::Kind::ITEM) return a.key == b.key;
  return *a.predicate == *b.predicate && a.low == b.low && a.high == b.high;
}

OpResult failed(Status s) {
  OpResult r;
  r.status = s;
  return r;
}

}  // namespace

std::string_view status_name(Status status) {
  for (const auto &[s, n] : kStatusNames) {
    if (s == status) return n;
  }
  return "Unknown";
}

std::optional<Status> status_from_name(std::string_view name) {
  for (const auto &[s, n] : kStatusNames) {
    if (n == name) return s;
  }
  return std::nullopt;
}

bool LockResource::covers(const Row &image) const {
  switch (kind) {
    case Kind::ITEM:
      return image.key() == key;
    case Kind::PREDICATE:
      return eval_predicate(image, *predicate);
    case Kind::RANGE:
      if (low && image.key() <= *low) return false;
      if (high && image.key() > *high) return false;
      return eval_predicate(image, *predicate);
  }
  return false;
}

Engine::Engine(CanonicalTable table, EngineConfig config) : table_(std::move(table)), config_(config) {}

Status Engine::begin(TxnId txn, IsolationLevel level) {
  std::lock_guard lk(mu_);
  auto it = txns_.find(txn);
  if (it != txns_.end() && (it->second.status == TxnStatus::ACTIVE || it->second.status == TxnStatus::BLOCKED)) {
    return Status::DUPLICATE_TXN;
  }
  Txn t;
  t.id = txn;
  t.level = level;
  t.begin_seq = next_begin_++;
  txns_[txn] = std::move(t);
  return Status::OK;
}

template <typename Body>
OpResult Engine::run_op(TxnId id, Body &&body) {
  std::unique_lock lk(mu_);
  auto it = txns_.find(id);
  if (it == txns_.end() || it->second.status == TxnStatus::COMMITTED) return failed(Status::UNKNOWN_TXN);
  if (it->second.status == TxnStatus::ABORTED) return failed(Status::TXN_ABORTED);
  Txn &txn = it->second;
  OpResult result = body(lk, txn);
  if (txn.status == TxnStatus::ACTIVE) {
    release(txn, /*short_only=*/true);
    grant_waiters();
  }
  return result;
}

LockDuration Engine::read_duration(IsolationLevel level, bool predicate) const {
  if (config_.strictness == Strictness::STRICT_ALL_LONG) return LockDuration::LONG;
  switch (level) {
    case IsolationLevel::RU:
    case IsolationLevel::RC:
      return LockDuration::SHORT;
    case IsolationLevel::RR:
      return predicate ? LockDuration::SHORT : LockDuration::LONG;
    case IsolationLevel::SR:
      return LockDuration::LONG;
  }
  return LockDuration::LONG;
}

bool Engine::reads_take_locks(IsolationLevel level) const {
  return level != IsolationLevel::RU && !config_.skip_read_locks;
}

bool Engine::uses_ranges(const PredicateExpr &predicate) const {
  if (config_.lock_scope != LockScope::INCREMENTAL_RANGE) return false;
  const auto cols = predicate.columns();
  return std::any_of(cols.begin(), cols.end(), [this](Column c) { return table_.is_indexed(c); });
}

std::optional<Row> Engine::visible(Key key) const {
  auto it = table_.rows.find(key);
  if (it == table_.rows.end() || it->second.tombstone) return std::nullopt;
  return it->second;
}

std::optional<Key> Engine::next_match(const PredicateExpr &predicate, std::optional<Key> after,
                                      std::optional<Key> upto) const {
  auto it = after ? table_.rows.upper_bound(*after) : table_.rows.begin();
  for (; it != table_.rows.end(); ++it) {
    if (upto && it->first > *upto) break;
    if (eval_predicate(it->second, predicate)) return it->first;
  }
  return std::nullopt;
}

void Engine::record_event(TxnId txn, bool acquire, LockMode mode, LockDuration duration) {
  if (!config_.record_lock_events) return;
  events_.push_back(LockEvent{next_event_++, txn, acquire, mode, duration});
}

std::vector<Row> Engine::request_images(const Request &request) const {
  std::vector<Row> images;
  if (request.mode != LockMode::X || request.resource.kind != LockResource::Kind::ITEM) return images;
  auto current = visible(request.resource.key);
  if (current) images.push_back(*current);
  if (request.transform) {
    if (auto after = request.transform(current)) {
      after->tombstone = false;
      if (!current || !(*after == *current)) images.push_back(*after);
    }
  }
  return images;
}

bool Engine::conflicts(const Request &request, const std::vector<Row> &request_images, TxnId other_txn,
                       const LockResource &other, LockMode other_mode, const std::vector<Row> &other_images) const {
  using Kind = LockResource::Kind;
  if (other_txn == request.txn) return false;
  if (request.mode == LockMode::S && other_mode == LockMode::S) return false;
  const auto &mine = request.resource;
  if (mine.kind == Kind::ITEM && other.kind == Kind::ITEM) return mine.key == other.key;
  if (mine.kind == Kind::ITEM) {
    if (request.mode != LockMode::X) return false;
    return std::any_of(request_images.begin(), request_images.end(),
                       [&](const Row &img) { return other.covers(img); });
  }
  if (other.kind == Kind::ITEM) {
    if (other_mode != LockMode::X) return false;
    return std::any_of(other_images.begin(), other_images.end(), [&](const Row &img) { return mine.covers(img); });
  }
  return false;
}

bool Engine::compatible(const Request &request, const Waiter *self) const {
  const auto images = request_images(request);
  bool holds_same = false;
  for (const auto &g : grants_) {
    if (conflicts(request, images, g.txn, g.resource, g.mode, g.images)) return false;
    if (g.txn == request.txn && same_resource(g.resource, request.resource)) holds_same = true;
  }
  // FIFO: queue behind earlier conflicting waiters, except when re-locking something already held.
  if (holds_same) return true;
  for (const auto &w : queue_) {
    if (w.get() == self) break;
    if (w->state != Waiter::State::WAITING) continue;
    if (conflicts(request, images, w->request.txn, w->request.resource, w->request.mode,
                  request_images(w->request))) {
      return false;
    }
  }
  return true;
}

void Engine::grant(const Request &request) {
  const auto images = request_images(request);
  for (auto &g : grants_) {
    if (g.txn != request.txn || !same_resource(g.resource, request.resource)) continue;
    if (request.resource.kind == LockResource::Kind::ITEM) {
      const bool stronger = request.mode > g.mode || request.duration > g.duration;
      g.mode = std::max(g.mode, request.mode);
      g.duration = std::max(g.duration, request.duration);
      for (const auto &img : images) {
        if (std::find(g.images.begin(), g.images.end(), img) == g.images.end()) g.images.push_back(img);
      }
      if (stronger) record_event(request.txn, true, request.mode, request.duration);
      return;
    }
    if (g.duration >= request.duration) return;
  }
  grants_.push_back(LockGrant{request.txn, request.resource, request.mode, request.duration, images});
  record_event(request.txn, true, request.mode, request.duration);
}

void Engine::release(Txn &txn, bool short_only) {
  auto keep = [&](const LockGrant &g) {
    return g.txn != txn.id || (short_only && g.duration == LockDuration::LONG);
  };
  for (const auto &g : grants_) {
    if (!keep(g)) record_event(g.txn, false, g.mode, g.duration);
  }
  grants_.erase(std::remove_if(grants_.begin(), grants_.end(), [&](const LockGrant &g) { return !keep(g); }),
                grants_.end());
}

void Engine::grant_waiters() {
  for (auto it = queue_.begin(); it != queue_.end();) {
    auto w = *it;
    if (w->state == Waiter::State::WAITING && compatible(w->request, w.get())) {
      it = queue_.erase(it);
      grant(w->request);
      w->state = Waiter::State::GRANTED;
      auto &txn = txns_.at(w->request.txn);
      txn.status = TxnStatus::ACTIVE;
      txn.pending.reset();
      if (w->announced && w->hooks.on_resume) w->hooks.on_resume();
    } else {
      ++it;
    }
  }
  cv_.notify_all();
}

std::vector<TxnId> Engine::blockers_of(const Waiter &waiter) const {
  std::vector<TxnId> out;
  auto add = [&out](TxnId t) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  };
  const auto &req = waiter.request;
  const auto images = request_images(req);
  bool holds_same = false;
  for (const auto &g : grants_) {
    if (conflicts(req, images, g.txn, g.resource, g.mode, g.images)) add(g.txn);
    if (g.txn == req.txn && same_resource(g.resource, req.resource)) holds_same = true;
  }
  if (!holds_same) {
    for (const auto &w : queue_) {
      if (w.get() == &waiter) break;
      if (w->state != Waiter::State::WAITING) continue;
      if (conflicts(req, images, w->request.txn, w->request.resource, w->request.mode,
                    request_images(w->request))) {
        add(w->request.txn);
      }
    }
  }
  return out;
}

std::optional<std::vector<TxnId>> Engine::find_cycle(TxnId from) const {
  std::map<TxnId, std::vector<TxnId>> edges;
  for (const auto &w : queue_) {
    if (w->state == Waiter::State::WAITING) edges[w->request.txn] = blockers_of(*w);
  }
  std::vector<TxnId> path;
  std::set<TxnId> visited;
  std::function<bool(TxnId)> dfs = [&](TxnId node) {
    path.push_back(node);
    visited.insert(node);
    auto it = edges.find(node);
    if (it != edges.end()) {
      for (TxnId next : it->second) {
        if (next == from) return true;
        if (visited.count(next) == 0 && dfs(next)) return true;
      }
    }
    path.pop_back();
    return false;
  };
  if (dfs(from)) return path;
  return std::nullopt;
}

void Engine::abort_victim(TxnId victim) {
  auto &txn = txns_.at(victim);
  if (auto w = txn.pending) {
    queue_.erase(std::remove(queue_.begin(), queue_.end(), w), queue_.end());
    w->state = Waiter::State::ABORTED;
    txn.pending.reset();
    if (w->announced && w->hooks.on_resume) w->hooks.on_resume();
  }
  rollback_locked(txn);
  grant_waiters();
}

void Engine::resolve_deadlocks(TxnId requester) {
  while (auto cycle = find_cycle(requester)) {
    TxnId victim = requester;
    if (config_.victim_rule == VictimRule::YOUNGEST) {
      victim = *std::max_element(cycle->begin(), cycle->end(), [this](TxnId a, TxnId b) {
        return txns_.at(a).begin_seq < txns_.at(b).begin_seq;
      });
    }
    abort_victim(victim);
    if (victim == requester) break;
  }
}

std::optional<TxnId> Engine::detect_deadlock() {
  std::lock_guard lk(mu_);
  for (const auto &w : queue_) {
    if (w->state != Waiter::State::WAITING) continue;
    const TxnId start = w->request.txn;
    if (auto cycle = find_cycle(start)) {
      TxnId victim = start;
      if (config_.victim_rule == VictimRule::YOUNGEST) {
        victim = *std::max_element(cycle->begin(), cycle->end(), [this](TxnId a, TxnId b) {
          return txns_.at(a).begin_seq < txns_.at(b).begin_seq;
        });
      }
      abort_victim(victim);
      return victim;
    }
  }
  return std::nullopt;
}

Status Engine::acquire(std::unique_lock<std::mutex> &lk, Txn &txn, Request request, const WaitHooks &hooks) {
  if (compatible(request, nullptr)) {
    grant(request);
    return Status::OK;
  }
  if (hooks.no_wait || config_.wait_policy == WaitPolicy::NO_WAIT) return Status::WOULD_BLOCK;

  auto w = std::make_shared<Waiter>();
  w->request = std::move(request);
  w->ticket = next_ticket_++;
  w->hooks = hooks;
  queue_.push_back(w);
  txn.status = TxnStatus::BLOCKED;
  txn.pending = w;

  // Resolve cycles before announcing the wait, so a self-chosen victim never reports blocking.
  resolve_deadlocks(txn.id);
  if (w->state == Waiter::State::WAITING) {
    w->announced = true;
    if (hooks.on_wait) hooks.on_wait();
    cv_.wait(lk, [&] { return w->state != Waiter::State::WAITING; });
  }
  switch (w->state) {
    case Waiter::State::GRANTED:
      return Status::OK;
    case Waiter::State::ABORTED:
      return Status::DEADLOCK_ABORT;
    case Waiter::State::CANCELLED:
    case Waiter::State::WAITING:
      break;
  }
  return Status::CANCELLED;
}

void Engine::cancel_waiters() {
  std::lock_guard lk(mu_);
  for (auto &w : queue_) {
    w->state = Waiter::State::CANCELLED;
    auto &txn = txns_.at(w->request.txn);
    txn.status = TxnStatus::ACTIVE;
    txn.pending.reset();
    if (w->announced && w->hooks.on_resume) w->hooks.on_resume();
  }
  queue_.clear();
  cv_.notify_all();
}

Status Engine::scan(std::unique_lock<std::mutex> &lk, Txn &txn, const std::shared_ptr<const PredicateExpr> &predicate,
                    ScanState &state, std::optional<std::int64_t> max_rows, bool lock_ranges, LockDuration duration,
                    const WaitHooks &hooks, std::vector<Key> &out) {
  std::int64_t fetched = 0;
  while (!state.exhausted && (!max_rows || fetched < *max_rows)) {
    auto next = next_match(*predicate, state.position, std::nullopt);
    if (lock_ranges) {
      Request req;
      req.txn = txn.id;
      req.resource.kind = LockResource::Kind::RANGE;
      req.resource.predicate = predicate;
      req.resource.low = state.position;
      req.resource.high = next;
      req.mode = LockMode::S;
      req.duration = duration;
      const Status s = acquire(lk, txn, std::move(req), hooks);
      if (s != Status::OK) return s;
      // The range is now stable; the first match inside it may differ from before the wait.
      next = next_match(*predicate, state.position, next);
    }
    if (!next) {
      state.exhausted = true;
      break;
    }
    out.push_back(*next);
    state.position = next;
    ++fetched;
  }
  return Status::OK;
}

Status Engine::write_row(std::unique_lock<std::mutex> &lk, Txn &txn, Key key, Transform transform,
                         const WaitHooks &hooks, std::optional<Row> &current) {
  if (txn.level == IsolationLevel::RU && !config_.ru_writes_allowed) return Status::READ_ONLY_VIOLATION;
  Request req;
  req.txn = txn.id;
  req.resource = item(key);
  req.mode = LockMode::X;
  req.duration = LockDuration::LONG;
  req.transform = std::move(transform);
  const Status s = acquire(lk, txn, std::move(req), hooks);
  if (s != Status::OK) return s;
  current = visible(key);
  return Status::OK;
}

WriteImage Engine::apply(Txn &txn, Key key, const std::optional<Row> &before, const std::optional<Row> &after) {
  UndoEntry undo{key, std::nullopt};
  if (auto it = table_.rows.find(key); it != table_.rows.end()) undo.physical_before = it->second;
  if (after) {
    Row row = *after;
    row.tombstone = false;
    table_.rows[key] = row;
  } else {
    table_.rows.at(key).tombstone = true;
  }
  txn.undo.push_back(undo);
  return WriteImage{next_write_++, key, before, after};
}

OpResult Engine::read_item(TxnId id, Key key, Column column, const WaitHooks &hooks) {
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    if (reads_take_locks(txn.level)) {
      Request req;
      req.txn = txn.id;
      req.resource = item(key);
      req.mode = LockMode::S;
      req.duration = read_duration(txn.level, false);
      const Status s = acquire(lk, txn, std::move(req), hooks);
      if (s != Status::OK) return failed(s);
    }
    auto row = visible(key);
    if (!row) return failed(Status::ROW_NOT_FOUND);
    OpResult r;
    r.values.push_back(row->get(column));
    return r;
  });
}

OpResult Engine::write_item(TxnId id, Key key, const std::vector<std::pair<Column, std::int64_t>> &values,
                            const WaitHooks &hooks) {
  for (const auto &[c, v] : values) {
    if (c == Column::RECKEY) return failed(Status::INVALID_ARGUMENT);
  }
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    Transform transform = [values](const std::optional<Row> &cur) -> std::optional<Row> {
      if (!cur) return std::nullopt;
      Row row = *cur;
      if (values.empty()) {
        row.set(Column::RECVAL, row.get(Column::RECVAL) + 1);
      } else {
        for (const auto &[c, v] : values) row.set(c, v);
      }
      return row;
    };
    std::optional<Row> current;
    const Status s = write_row(lk, txn, key, transform, hooks, current);
    if (s != Status::OK) return failed(s);
    if (!current) return failed(Status::ROW_NOT_FOUND);
    OpResult r;
    r.images.push_back(apply(txn, key, current, transform(current)));
    return r;
  });
}

OpResult Engine::rw_item(TxnId id, Key key, const WaitHooks &hooks) {
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    Transform transform = [](const std::optional<Row> &cur) -> std::optional<Row> {
      if (!cur) return std::nullopt;
      Row row = *cur;
      row.set(Column::RECVAL, row.get(Column::RECVAL) + 1);
      return row;
    };
    std::optional<Row> current;
    const Status s = write_row(lk, txn, key, transform, hooks, current);
    if (s != Status::OK) return failed(s);
    if (!current) return failed(Status::ROW_NOT_FOUND);
    OpResult r;
    r.values.push_back(current->get(Column::RECVAL));
    r.images.push_back(apply(txn, key, current, transform(current)));
    return r;
  });
}

OpResult Engine::insert_item(TxnId id, std::optional<Key> key,
                             const std::vector<std::pair<Column, std::int64_t>> &values, const WaitHooks &hooks) {
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    if (!key) {
      for (const auto &[c, v] : values) {
        if (c == Column::RECKEY) key = v;
      }
    }
    if (!key) {
      Key k = 150;
      while (table_.rows.count(k) != 0) k += 100;
      key = k;
    }
    Row row;
    row.set(Column::RECKEY, *key);
    row.set(Column::RECVAL, *key * 100);
    for (const auto &[c, v] : values) {
      if (c != Column::RECKEY) row.set(c, v);
    }
    Transform transform = [row](const std::optional<Row> &cur) -> std::optional<Row> { return cur ? cur : row; };
    std::optional<Row> current;
    const Status s = write_row(lk, txn, *key, transform, hooks, current);
    if (s != Status::OK) return failed(s);
    if (current) return failed(Status::DUPLICATE_KEY);
    OpResult r;
    r.key = *key;
    r.images.push_back(apply(txn, *key, std::nullopt, row));
    return r;
  });
}

OpResult Engine::delete_item(TxnId id, Key key, const WaitHooks &hooks) {
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    Transform transform = [](const std::optional<Row> &) -> std::optional<Row> { return std::nullopt; };
    std::optional<Row> current;
    const Status s = write_row(lk, txn, key, transform, hooks, current);
    if (s != Status::OK) return failed(s);
    if (!current) return failed(Status::ROW_NOT_FOUND);
    OpResult r;
    r.images.push_back(apply(txn, key, current, std::nullopt));
    return r;
  });
}

OpResult Engine::predicate_read(TxnId id, int cursor_id, const PredicateExpr &predicate, const FetchSpec &spec,
                                const WaitHooks &hooks) {
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    bool opened = false;
    if (cursor_id == 0) {
      for (int i = 1; i <= kMaxCursorsPerTxn; ++i) {
        if (txn.cursors.count(i) == 0) {
          cursor_id = i;
          break;
        }
      }
      if (cursor_id == 0) return failed(Status::CURSOR_LIMIT_EXCEEDED);
      CursorState c;
      c.predicate = std::make_shared<const PredicateExpr>(predicate);
      c.column = spec.column;
      c.aggregate = spec.aggregate;
      txn.cursors[cursor_id] = std::move(c);
      opened = true;
    } else if (txn.cursors.count(cursor_id) == 0) {
      return failed(Status::INVALID_ARGUMENT);
    }

    // Copy out: the cursor map is cleared if this transaction is aborted while we wait.
    const CursorState cursor = txn.cursors.at(cursor_id);
    const bool locks = reads_take_locks(txn.level);
    const LockDuration duration = read_duration(txn.level, true);
    const bool ranges = locks && uses_ranges(*cursor.predicate);
    auto fail = [&](Status s) {
      if (opened && s != Status::DEADLOCK_ABORT) txn.cursors.erase(cursor_id);
      return failed(s);
    };

    if (locks && !ranges) {
      Request req;
      req.txn = txn.id;
      req.resource.kind = LockResource::Kind::PREDICATE;
      req.resource.predicate = cursor.predicate;
      req.mode = LockMode::S;
      req.duration = duration;
      const Status s = acquire(lk, txn, std::move(req), hooks);
      if (s != Status::OK) return fail(s);
    }

    ScanState state{cursor.position, cursor.exhausted};
    std::vector<Key> keys;
    OpResult r;
    if (cursor.aggregate) {
      if (!cursor.exhausted) {
        const Status s = scan(lk, txn, cursor.predicate, state, std::nullopt, ranges, duration, hooks, keys);
        if (s != Status::OK) return fail(s);
        r.values.push_back(static_cast<std::int64_t>(keys.size()));
      }
      state.exhausted = true;
    } else {
      std::optional<std::int64_t> max_rows;
      if (!spec.limit.all) max_rows = spec.limit.count;
      const Status s = scan(lk, txn, cursor.predicate, state, max_rows, ranges, duration, hooks, keys);
      if (s != Status::OK) return fail(s);
      const Column column = spec.column.value_or(Column::RECKEY);
      for (Key k : keys) {
        FetchedRow fr{k, std::nullopt};
        if (column != Column::RECKEY) fr.value = visible(k)->get(column);
        r.rows.push_back(fr);
      }
    }

    if (spec.limit.all) {
      txn.cursors.erase(cursor_id);
      r.cursor_id = -1;
    } else {
      auto &c = txn.cursors.at(cursor_id);
      c.position = state.position;
      c.exhausted = state.exhausted;
      r.cursor_id = cursor_id;
    }
    return r;
  });
}

OpResult Engine::set_update(TxnId id, const PredicateExpr &predicate, std::int64_t delta, const WaitHooks &hooks) {
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    if (txn.level == IsolationLevel::RU && !config_.ru_writes_allowed) return failed(Status::READ_ONLY_VIOLATION);
    Transform transform = [delta](const std::optional<Row> &cur) -> std::optional<Row> {
      if (!cur) return std::nullopt;
      Row row = *cur;
      row.set(Column::RECVAL, row.get(Column::RECVAL) + delta);
      return row;
    };
    std::vector<Key> targets;
    std::optional<Key> position;
    while (auto next = next_match(predicate, position, std::nullopt)) {
      position = next;
      std::optional<Row> current;
      const Status s = write_row(lk, txn, *next, transform, hooks, current);
      if (s != Status::OK) return failed(s);
      if (current && eval_predicate(*current, predicate)) targets.push_back(*next);
    }
    OpResult r;
    for (Key k : targets) {
      auto current = visible(k);
      r.images.push_back(apply(txn, k, current, transform(current)));
    }
    r.values.push_back(static_cast<std::int64_t>(targets.size()));
    return r;
  });
}

OpResult Engine::set_select(TxnId id, const PredicateExpr &predicate, Aggregate aggregate, Column column,
                            const WaitHooks &hooks) {
  return run_op(id, [&](std::unique_lock<std::mutex> &lk, Txn &txn) {
    auto pred = std::make_shared<const PredicateExpr>(predicate);
    const bool locks = reads_take_locks(txn.level);
    const LockDuration duration = read_duration(txn.level, true);
    const bool ranges = locks && uses_ranges(*pred);
    if (locks && !ranges) {
      Request req;
      req.txn = txn.id;
      req.resource.kind = LockResource::Kind::PREDICATE;
      req.resource.predicate = pred;
      req.mode = LockMode::S;
      req.duration = duration;
      const Status s = acquire(lk, txn, std::move(req), hooks);
      if (s != Status::OK) return failed(s);
    }
    ScanState state;
    std::vector<Key> keys;
    const Status s = scan(lk, txn, pred, state, std::nullopt, ranges, duration, hooks, keys);
    if (s != Status::OK) return failed(s);
    OpResult r;
    if (aggregate == Aggregate::COUNT) {
      r.values.push_back(static_cast<std::int64_t>(keys.size()));
    } else {
      std::int64_t sum = 0;
      for (Key k : keys) sum += visible(k)->get(column);
      r.values.push_back(sum);
    }
    return r;
  });
}

OpResult Engine::commit(TxnId id) {
  std::lock_guard lk(mu_);
  auto it = txns_.find(id);
  if (it == txns_.end() || it->second.status == TxnStatus::COMMITTED) return failed(Status::UNKNOWN_TXN);
  Txn &txn = it->second;
  if (txn.status == TxnStatus::ABORTED) return failed(Status::TXN_ABORTED);
  for (const auto &u : txn.undo) {
    auto row = table_.rows.find(u.key);
    if (row != table_.rows.end() && row->second.tombstone) table_.rows.erase(row);
  }
  txn.undo.clear();
  txn.cursors.clear();
  release(txn, /*short_only=*/false);
  txn.status = TxnStatus::COMMITTED;
  grant_waiters();
  return OpResult{};
}

void Engine::rollback_locked(Txn &txn) {
  for (auto it = txn.undo.rbegin(); it != txn.undo.rend(); ++it) {
    if (it->physical_before) {
      table_.rows[it->key] = *it->physical_before;
    } else {
      table_.rows.erase(it->key);
    }
  }
  txn.undo.clear();
  txn.cursors.clear();
  release(txn, /*short_only=*/false);
  txn.status = TxnStatus::ABORTED;
}

OpResult Engine::rollback(TxnId id) {
  std::lock_guard lk(mu_);
  auto it = txns_.find(id);
  if (it == txns_.end() || it->second.status == TxnStatus::COMMITTED) return failed(Status::UNKNOWN_TXN);
  if (it->second.status == TxnStatus::ABORTED) return OpResult{};
  rollback_locked(it->second);
  grant_waiters();
  return OpResult{};
}

CanonicalTable Engine::snapshot() const {
  std::lock_guard lk(mu_);
  return table_;
}

std::optional<TxnStatus> Engine::status(TxnId txn) const {
  std::lock_guard lk(mu_);
  auto it = txns_.find(txn);
  if (it == txns_.end()) return std::nullopt;
  return it->second.status;
}

std::vector<LockGrant> Engine::locks_held(TxnId txn) const {
  std::lock_guard lk(mu_);
  std::vector<LockGrant> out;
  for (const auto &g : grants_) {
    if (g.txn == txn) out.push_back(g);
  }
  return out;
}

std::vector<std::pair<TxnId, TxnId>> Engine::waits_for_edges() const {
  std::lock_guard lk(mu_);
  std::vector<std::pair<TxnId, TxnId>> out;
  for (const auto &w : queue_) {
    if (w->state != Waiter::State::WAITING) continue;
    for (TxnId t : blockers_of(*w)) out.emplace_back(w->request.txn, t);
  }
  return out;
}

std::vector<LockEvent> Engine::lock_events() const {
  std::lock_guard lk(mu_);
  return events_;
}

}  // namespace histex
