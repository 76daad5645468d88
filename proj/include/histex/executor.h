#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "histex/engine.h"
#include "histex/notation.h"
#include "histex/outhist.h"
#include "histex/protocol.h"

namespace histex {

enum class ExecMode : std::uint8_t { SYNC, ASYNC };

struct ExecutorConfig {
  IsolationLevel default_level = IsolationLevel::SR;
  ExecMode mode = ExecMode::SYNC;
  std::chrono::milliseconds timeout{2000};
  // How long to wait for progress when every remaining step is held up. Defaults to `timeout`.
  std::optional<std::chrono::milliseconds> global_timeout;
  std::int64_t rows = 200;
  bool indexes = true;
  EngineConfig engine;
};

/// Applies HISTEX_TIMEOUT (seconds, fractional allowed) when it is set and parses.
ExecutorConfig apply_environment(ExecutorConfig config);

struct BindingEnv {
  std::map<std::string, Key> row_vars;
  std::map<std::string, std::int64_t> value_vars;
  std::map<std::string, PredicateExpr> pred_vars;
  std::map<std::pair<TxnId, std::string>, int> cursors;

  /// Binds `var` to the lowest canonical reckey no variable holds yet, unless already bound.
  Key bind_row(const std::string &var, std::int64_t row_count);
};

/// Turns a transactional step into a worker request, binding fresh row variables on the way.
/// Returns an error code instead when a referenced variable has no value.
struct Resolution {
  std::optional<WorkerRequest> request;
  std::string error;
};
Resolution resolve_step(const Step &step, BindingEnv &env, std::int64_t row_count);

/// Folds a completed response back into the bindings (value variables, cursors, inserted keys).
void bind_results(const Step &step, const WorkerResponse &response, BindingEnv &env);

struct DispatchRecord {
  std::size_t step_index = 0;
  TxnId txn = 0;
  std::uint64_t submit_event = 0;
  std::optional<std::uint64_t> completion_event;
  RecordStatus status = RecordStatus::OK;
};

/// One long-lived thread serving a single transaction subscript over a channel pair.
class Worker {
 public:
  Worker(Engine &engine, TxnId txn, std::shared_ptr<Notifier> notifier);
  ~Worker();
  Worker(const Worker &) = delete;
  Worker &operator=(const Worker &) = delete;

  TxnId txn() const { return txn_; }
  void send(const WorkerRequest &request) { requests_.send(encode_request(request)); }
  Channel &responses() { return responses_; }
  bool finished() const { return finished_.load(); }
  void join();

 private:
  void loop();

  Engine &engine_;
  TxnId txn_;
  Channel requests_;
  Channel responses_;
  std::atomic<bool> finished_{false};
  std::thread thread_;
};

struct ExecutionResult {
  OutputHistory history;
  std::vector<DispatchRecord> dispatch;
  bool stuck = false;
  CanonicalTable final_table;
  std::vector<LockEvent> lock_events;
};

ExecutionResult run_history(const HistoryProgram &program, const ExecutorConfig &config);

std::vector<std::pair<std::string, std::string>> config_echo(const ExecutorConfig &config);

}  // namespace histex
