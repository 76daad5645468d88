#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "histex/dataset.h"
#include "histex/notation.h"
#include "histex/predicate.h"
#include "histex/schema.h"

namespace histex {

enum class Status : std::uint8_t {
  OK,
  ROW_NOT_FOUND,
  DUPLICATE_KEY,
  READ_ONLY_VIOLATION,
  DEADLOCK_ABORT,
  CURSOR_LIMIT_EXCEEDED,
  UNKNOWN_TXN,
  DUPLICATE_TXN,
  TXN_ABORTED,
  WOULD_BLOCK,
  CANCELLED,
  INVALID_ARGUMENT,
};

/// Wire name used in FAILURE frames and output histories, e.g. "RowNotFound".
std::string_view status_name(Status status);
std::optional<Status> status_from_name(std::string_view name);

enum class TxnStatus : std::uint8_t { ACTIVE, BLOCKED, COMMITTED, ABORTED };

enum class LockMode : std::uint8_t { S, X };
enum class LockDuration : std::uint8_t { SHORT, LONG };

enum class LockScope : std::uint8_t { PREDICATE, INCREMENTAL_RANGE };
enum class Strictness : std::uint8_t { PER_LEVEL, STRICT_ALL_LONG };
enum class VictimRule : std::uint8_t { YOUNGEST, REQUESTER };
enum class WaitPolicy : std::uint8_t { WAIT, NO_WAIT };

struct EngineConfig {
  LockScope lock_scope = LockScope::PREDICATE;
  Strictness strictness = Strictness::PER_LEVEL;
  VictimRule victim_rule = VictimRule::YOUNGEST;
  WaitPolicy wait_policy = WaitPolicy::WAIT;
  // RU transactions may write (taking LONG X locks like every other level).
  bool ru_writes_allowed = false;
  // Fault injection: RC and above read without any locks.
  bool skip_read_locks = false;
  bool record_lock_events = false;
};

struct LockResource {
  enum class Kind : std::uint8_t { ITEM, PREDICATE, RANGE };

  Kind kind = Kind::ITEM;
  Key key = 0;                                      // ITEM
  std::shared_ptr<const PredicateExpr> predicate;  // PREDICATE, RANGE
  std::optional<Key> low;                           // RANGE, exclusive; nullopt is -inf
  std::optional<Key> high;                          // RANGE, inclusive; nullopt is +inf

  /// Whether a row image falls under this predicate or range resource.
  bool covers(const Row &image) const;
};

struct LockGrant {
  TxnId txn = 0;
  LockResource resource;
  LockMode mode = LockMode::S;
  LockDuration duration = LockDuration::SHORT;
  // X item grants only: every before/after image the holder has produced under this lock.
  std::vector<Row> images;
};

struct WriteImage {
  std::uint64_t seq = 0;
  Key key = 0;
  std::optional<Row> before;  // nullopt for INSERT
  std::optional<Row> after;   // nullopt for DELETE

  bool operator==(const WriteImage &) const = default;
};

struct CursorState {
  std::shared_ptr<const PredicateExpr> predicate;
  std::optional<Column> column;  // nullopt with aggregate
  bool aggregate = false;
  std::optional<Key> position;  // last reckey returned
  bool open = true;
  bool exhausted = false;
};

inline constexpr int kMaxCursorsPerTxn = 8;

struct FetchedRow {
  Key key = 0;
  std::optional<std::int64_t> value;  // nullopt for the reckey-only form

  bool operator==(const FetchedRow &) const = default;
};

struct FetchSpec {
  std::optional<Column> column;
  bool aggregate = false;
  RowLimit limit = RowLimit::everything();
};

enum class Aggregate : std::uint8_t { SUM, COUNT };

struct OpResult {
  Status status = Status::OK;
  std::vector<std::int64_t> values;
  std::vector<FetchedRow> rows;
  std::vector<WriteImage> images;
  std::optional<Key> key;  // inserted reckey
  int cursor_id = 0;       // predicate reads: open cursor id, or -1 once closed

  bool ok() const { return status == Status::OK; }
};

/// Callbacks a caller may attach to observe blocking. Both run on whichever thread
/// changes the request's state, with the engine latch held; they must not call back into the engine.
struct WaitHooks {
  std::function<void()> on_wait;    // request queued; the calling thread is about to block
  std::function<void()> on_resume;  // a queued request was granted, aborted or cancelled
  bool no_wait = false;             // fail with WOULD_BLOCK instead of queueing
};

struct LockEvent {
  std::uint64_t seq = 0;
  TxnId txn = 0;
  bool acquire = true;
  LockMode mode = LockMode::S;
  LockDuration duration = LockDuration::SHORT;
};

/// Reference strict-2PL engine over one CanonicalTable. Thread-safe; each call
/// may block the caller until its lock is granted, it is chosen as a deadlock
/// victim, or waiters are cancelled.
class Engine {
 public:
  explicit Engine(CanonicalTable table, EngineConfig config = {});
  Engine(const Engine &) = delete;
  Engine &operator=(const Engine &) = delete;

  Status begin(TxnId txn, IsolationLevel level);

  OpResult read_item(TxnId txn, Key key, Column column = Column::RECVAL, const WaitHooks &hooks = {});

  /// Empty `values` means the default update: recval += 1.
  OpResult write_item(TxnId txn, Key key, const std::vector<std::pair<Column, std::int64_t>> &values,
                      const WaitHooks &hooks = {});

  /// Returns the pre-update recval and stores recval + 1 under a single X lock.
  OpResult rw_item(TxnId txn, Key key, const WaitHooks &hooks = {});

  /// Without a key (and no reckey in `values`) the smallest free 100*j+50 is used.
  /// Unspecified columns default to recval = reckey*100 and 0 elsewhere.
  OpResult insert_item(TxnId txn, std::optional<Key> key, const std::vector<std::pair<Column, std::int64_t>> &values,
                       const WaitHooks &hooks = {});

  OpResult delete_item(TxnId txn, Key key, const WaitHooks &hooks = {});

  /// `cursor_id` 0 opens a new cursor. The result's cursor_id names it, or is -1 after an `all` fetch closed it.
  OpResult predicate_read(TxnId txn, int cursor_id, const PredicateExpr &predicate, const FetchSpec &spec,
                          const WaitHooks &hooks = {});

  OpResult set_update(TxnId txn, const PredicateExpr &predicate, std::int64_t delta, const WaitHooks &hooks = {});

  OpResult set_select(TxnId txn, const PredicateExpr &predicate, Aggregate aggregate,
                      Column column = Column::RECVAL, const WaitHooks &hooks = {});

  OpResult commit(TxnId txn);
  OpResult rollback(TxnId txn);

  /// Looks for a waits-for cycle; aborts the victim and returns it.
  std::optional<TxnId> detect_deadlock();

  /// Wakes every queued request with CANCELLED. Used at teardown.
  void cancel_waiters();

  CanonicalTable snapshot() const;
  std::optional<TxnStatus> status(TxnId txn) const;
  std::vector<LockGrant> locks_held(TxnId txn) const;
  std::vector<std::pair<TxnId, TxnId>> waits_for_edges() const;
  std::vector<LockEvent> lock_events() const;
  const EngineConfig &config() const { return config_; }

 private:
  using Transform = std::function<std::optional<Row>(const std::optional<Row> &)>;

  struct Request {
    TxnId txn = 0;
    LockResource resource;
    LockMode mode = LockMode::S;
    LockDuration duration = LockDuration::SHORT;
    Transform transform;  // X item requests: the row the write will produce
  };

  struct Waiter {
    enum class State : std::uint8_t { WAITING, GRANTED, ABORTED, CANCELLED };
    Request request;
    std::uint64_t ticket = 0;
    State state = State::WAITING;
    WaitHooks hooks;
    bool announced = false;
  };

  struct UndoEntry {
    Key key = 0;
    std::optional<Row> physical_before;
  };

  struct Txn {
    TxnId id = 0;
    IsolationLevel level = IsolationLevel::SR;
    TxnStatus status = TxnStatus::ACTIVE;
    std::uint64_t begin_seq = 0;
    std::vector<UndoEntry> undo;
    std::map<int, CursorState> cursors;
    std::shared_ptr<Waiter> pending;
  };

  struct ScanState {
    std::optional<Key> position;
    bool exhausted = false;
  };

  template <typename Body>
  OpResult run_op(TxnId txn, Body &&body);

  Status acquire(std::unique_lock<std::mutex> &lk, Txn &txn, Request request, const WaitHooks &hooks);
  bool compatible(const Request &request, const Waiter *self) const;
  bool conflicts(const Request &request, const std::vector<Row> &request_images, TxnId other_txn,
                 const LockResource &other_resource, LockMode other_mode, const std::vector<Row> &other_images) const;
  std::vector<Row> request_images(const Request &request) const;
  void grant(const Request &request);
  void grant_waiters();
  void release(Txn &txn, bool short_only);
  std::vector<TxnId> blockers_of(const Waiter &waiter) const;
  std::optional<std::vector<TxnId>> find_cycle(TxnId from) const;
  void resolve_deadlocks(TxnId requester);
  void abort_victim(TxnId victim);
  void rollback_locked(Txn &txn);
  void record_event(TxnId txn, bool acquire, LockMode mode, LockDuration duration);

  LockDuration read_duration(IsolationLevel level, bool predicate) const;
  bool reads_take_locks(IsolationLevel level) const;
  bool uses_ranges(const PredicateExpr &predicate) const;
  std::optional<Row> visible(Key key) const;
  std::optional<Key> next_match(const PredicateExpr &predicate, std::optional<Key> after,
                                std::optional<Key> upto) const;
  Status scan(std::unique_lock<std::mutex> &lk, Txn &txn, const std::shared_ptr<const PredicateExpr> &predicate,
              ScanState &state, std::optional<std::int64_t> max_rows, bool lock_ranges, LockDuration duration,
              const WaitHooks &hooks, std::vector<Key> &out);
  Status write_row(std::unique_lock<std::mutex> &lk, Txn &txn, Key key, Transform transform, const WaitHooks &hooks,
                   std::optional<Row> &current);
  WriteImage apply(Txn &txn, Key key, const std::optional<Row> &before, const std::optional<Row> &after);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  CanonicalTable table_;
  EngineConfig config_;
  std::map<TxnId, Txn> txns_;
  std::vector<LockGrant> grants_;
  std::deque<std::shared_ptr<Waiter>> queue_;
  std::uint64_t next_ticket_ = 1;
  std::uint64_t next_begin_ = 1;
  std::uint64_t next_write_ = 1;
  std::uint64_t next_event_ = 1;
  std::vector<LockEvent> events_;
};

}  // namespace histex
