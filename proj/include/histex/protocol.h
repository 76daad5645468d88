#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "histex/engine.h"

namespace histex {

using Clock = std::chrono::steady_clock;

/// Shared wake-up source so the monitor can wait on many channels at once.
class Notifier {
 public:
  void notify();
  std::uint64_t generation() const;
  /// Returns false if the deadline passed with no notify() after `seen`.
  bool wait_for_change(std::uint64_t seen, Clock::time_point deadline) const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::uint64_t generation_ = 0;
};

/// One direction of a monitor/worker link. Frames are newline-terminated text.
class Channel {
 public:
  explicit Channel(std::shared_ptr<Notifier> notifier = nullptr) : notifier_(std::move(notifier)) {}

  /// Throws ProtocolError unless `frame` is a single line ending in '\n'.
  void send(std::string frame);
  std::string receive();
  std::optional<std::string> receive_until(Clock::time_point deadline);
  std::optional<std::string> try_receive();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> frames_;
  std::shared_ptr<Notifier> notifier_;
};

struct WorkerRequest {
  enum class Kind : std::uint8_t {
    BEGIN,
    READ,
    WRITE,
    RW,
    INSERT,
    DELETE,
    PR,
    SETUPDATE,
    SETSELECT,
    COMMIT,
    ROLLBACK,
    FINALIZE,
  };

  Kind kind = Kind::COMMIT;
  IsolationLevel level = IsolationLevel::SR;
  Key key = 0;  // 0 with INSERT asks the engine to allocate
  Column column = Column::RECVAL;
  std::vector<std::pair<Column, std::int64_t>> values;
  int cursor_id = 0;
  FetchSpec fetch;
  Aggregate aggregate = Aggregate::COUNT;
  std::int64_t delta = 1;
  std::optional<PredicateExpr> predicate;

  bool operator==(const WorkerRequest &other) const;
};

struct WorkerResponse {
  enum class Kind : std::uint8_t { SUCCESS, FAILURE, WAITING, RESUMING };

  Kind kind = Kind::SUCCESS;
  Status status = Status::OK;
  std::vector<std::int64_t> values;
  std::vector<FetchedRow> rows;
  std::vector<WriteImage> images;
  std::optional<Key> key;
  int cursor_id = 0;

  bool final() const { return kind == Kind::SUCCESS || kind == Kind::FAILURE; }
  bool operator==(const WorkerResponse &) const = default;
};

inline constexpr std::string_view kWaitingFrame = "WAITING\n";
inline constexpr std::string_view kResumingFrame = "RESUMING\n";

std::string encode_request(const WorkerRequest &request);
WorkerRequest decode_request(std::string_view frame);

std::string encode_response(const WorkerResponse &response);
WorkerResponse decode_response(std::string_view frame);

WorkerResponse to_response(const OpResult &result);

/// Executes one request frame for `txn` and returns the final response frame.
/// Malformed frames throw ProtocolError.
std::string handle_frame(Engine &engine, TxnId txn, std::string_view frame, const WaitHooks &hooks = {});

std::string encode_row(const std::optional<Row> &row);
std::optional<Row> decode_row(std::string_view text);

}  // namespace histex
