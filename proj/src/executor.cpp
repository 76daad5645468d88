#include "histex/executor.h"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "histex/dataset.h"
#include "histex/errors.h"

namespace histex {

ExecutorConfig apply_environment(ExecutorConfig config) {
  if (const char *env = std::getenv("HISTEX_TIMEOUT")) {
    char *end = nullptr;
    const double seconds = std::strtod(env, &end);
    if (end != env && *end == '\0' && seconds > 0) {
      config.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000));
    }
  }
  return config;
}

Key BindingEnv::bind_row(const std::string &var, std::int64_t row_count) {
  if (auto it = row_vars.find(var); it != row_vars.end()) return it->second;
  std::set<Key> taken;
  for (const auto &[_, k] : row_vars) taken.insert(k);
  Key key = 100;
  for (std::int64_t i = 1; i <= row_count; ++i) {
    key = 100 * i;
    if (taken.count(key) == 0) break;
  }
  row_vars[var] = key;
  return key;
}

Resolution resolve_step(const Step &step, BindingEnv &env, std::int64_t row_count) {
  Resolution res;
  WorkerRequest req;
  auto pairs = [&] {
    std::vector<std::pair<Column, std::int64_t>> out;
    for (std::size_t i = 0; i < step.column_spec.size(); ++i) out.emplace_back(step.column_spec[i], step.value_spec[i]);
    return out;
  };
  auto predicate = [&]() -> const PredicateExpr * {
    auto it = env.pred_vars.find(*step.pred_var);
    return it == env.pred_vars.end() ? nullptr : &it->second;
  };

  switch (step.kind) {
    case OpKind::IL:
      req.kind = WorkerRequest::Kind::BEGIN;
      req.level = *step.level;
      break;
    case OpKind::R:
      req.kind = WorkerRequest::Kind::READ;
      req.key = env.bind_row(*step.row_var, row_count);
      req.column = step.column_spec.empty() ? Column::RECVAL : step.column_spec.front();
      break;
    case OpKind::W:
      req.kind = WorkerRequest::Kind::WRITE;
      req.key = env.bind_row(*step.row_var, row_count);
      if (step.literal) {
        req.values = {{Column::RECVAL, *step.literal}};
      } else if (step.value_var) {
        auto it = env.value_vars.find(*step.value_var);
        if (it == env.value_vars.end()) {
          res.error = "UnboundVariable";
          return res;
        }
        req.values = {{Column::RECVAL, it->second}};
      } else {
        req.values = pairs();
      }
      break;
    case OpKind::RW:
      req.kind = WorkerRequest::Kind::RW;
      req.key = env.bind_row(*step.row_var, row_count);
      break;
    case OpKind::I: {
      req.kind = WorkerRequest::Kind::INSERT;
      auto it = env.row_vars.find(*step.row_var);
      req.key = it == env.row_vars.end() ? 0 : it->second;
      req.values = pairs();
      break;
    }
    case OpKind::D:
      req.kind = WorkerRequest::Kind::DELETE;
      req.key = env.bind_row(*step.row_var, row_count);
      break;
    case OpKind::PR: {
      const auto *p = predicate();
      if (!p) {
        res.error = "UnboundPredicate";
        return res;
      }
      req.kind = WorkerRequest::Kind::PR;
      req.predicate = *p;
      auto cur = env.cursors.find({step.txn, *step.pred_var});
      req.cursor_id = cur == env.cursors.end() ? 0 : cur->second;
      req.fetch.aggregate = step.aggregate;
      if (!step.aggregate) req.fetch.column = step.column_spec.empty() ? Column::RECKEY : step.column_spec.front();
      req.fetch.limit = step.row_limit.value_or(RowLimit::everything());
      break;
    }
    case OpKind::SU: {
      const auto *p = predicate();
      if (!p) {
        res.error = "UnboundPredicate";
        return res;
      }
      req.kind = WorkerRequest::Kind::SETUPDATE;
      req.predicate = *p;
      req.delta = step.literal.value_or(1);
      break;
    }
    case OpKind::SS: {
      const auto *p = predicate();
      if (!p) {
        res.error = "UnboundPredicate";
        return res;
      }
      req.kind = WorkerRequest::Kind::SETSELECT;
      req.predicate = *p;
      if (step.aggregate) {
        req.aggregate = Aggregate::COUNT;
      } else {
        req.aggregate = Aggregate::SUM;
        req.column = step.column_spec.empty() ? Column::RECVAL : step.column_spec.front();
      }
      break;
    }
    case OpKind::C:
      req.kind = WorkerRequest::Kind::COMMIT;
      break;
    case OpKind::A:
      req.kind = WorkerRequest::Kind::ROLLBACK;
      break;
    case OpKind::PRED:
    case OpKind::MAP:
      throw std::logic_error("declarative steps are not dispatched");
  }
  res.request = std::move(req);
  return res;
}

void bind_results(const Step &step, const WorkerResponse &response, BindingEnv &env) {
  if (response.kind != WorkerResponse::Kind::SUCCESS) return;
  switch (step.kind) {
    case OpKind::R:
    case OpKind::RW:
    case OpKind::SS:
      if (step.value_var && !response.values.empty()) env.value_vars[*step.value_var] = response.values.front();
      break;
    case OpKind::I:
      if (response.key && env.row_vars.count(*step.row_var) == 0) env.row_vars[*step.row_var] = *response.key;
      break;
    case OpKind::PR: {
      const std::pair<TxnId, std::string> cursor_key{step.txn, *step.pred_var};
      if (response.cursor_id > 0) {
        env.cursors[cursor_key] = response.cursor_id;
      } else {
        env.cursors.erase(cursor_key);
      }
      if (step.aggregate) {
        if (step.value_var && !response.values.empty()) env.value_vars[*step.value_var] = response.values.front();
      } else if (!response.rows.empty()) {
        const auto &last = response.rows.back();
        if (step.row_var && env.row_vars.count(*step.row_var) == 0) env.row_vars[*step.row_var] = last.key;
        if (step.value_var && last.value) env.value_vars[*step.value_var] = *last.value;
      }
      break;
    }
    default:
      break;
  }
}

Worker::Worker(Engine &engine, TxnId txn, std::shared_ptr<Notifier> notifier)
    : engine_(engine), txn_(txn), responses_(std::move(notifier)), thread_([this] { loop(); }) {}

Worker::~Worker() {
  if (thread_.joinable()) {
    if (!finished_) {
      WorkerRequest fin;
      fin.kind = WorkerRequest::Kind::FINALIZE;
      requests_.send(encode_request(fin));
    }
    thread_.join();
  }
}

void Worker::join() {
  if (thread_.joinable()) thread_.join();
}

void Worker::loop() {
  WaitHooks hooks;
  hooks.on_wait = [this] { responses_.send(std::string(kWaitingFrame)); };
  hooks.on_resume = [this] { responses_.send(std::string(kResumingFrame)); };
  while (true) {
    const std::string frame = requests_.receive();
    std::string reply;
    bool last = false;
    try {
      last = decode_request(frame).kind == WorkerRequest::Kind::FINALIZE;
      reply = handle_frame(engine_, txn_, frame, hooks);
    } catch (const ProtocolError &) {
      reply = "FAILURE InvalidArgument\n";
    }
    if (last) finished_ = true;
    responses_.send(std::move(reply));
    if (last) return;
  }
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExecutorConfig &c) {
  std::vector<std::pair<std::string, std::string>> out = {
      {"mode", c.mode == ExecMode::SYNC ? "sync" : "async"},
      {"default-level", std::string(level_name(c.default_level))},
      {"rows", std::to_string(c.rows)},
      {"indexes", c.indexes ? "on" : "off"},
      {"lock-scope", c.engine.lock_scope == LockScope::PREDICATE ? "predicate" : "incremental"},
      {"strictness", c.engine.strictness == Strictness::PER_LEVEL ? "per-level" : "strict"},
      {"victim", c.engine.victim_rule == VictimRule::YOUNGEST ? "youngest" : "requester"},
  };
  if (c.engine.ru_writes_allowed) out.emplace_back("ru-writes-allowed", "on");
  if (c.engine.skip_read_locks) out.emplace_back("skip-read-locks", "on");
  return out;
}

namespace {

RecordStatus failure_status(Status s) {
  switch (s) {
    case Status::DEADLOCK_ABORT:
      return RecordStatus::ABORTED_DEADLOCK;
    case Status::READ_ONLY_VIOLATION:
      return RecordStatus::READONLY_VIOLATION;
    default:
      return RecordStatus::ERROR;
  }
}

class Monitor {
 public:
  Monitor(const HistoryProgram &program, const ExecutorConfig &config)
      : program_(program), config_(config), engine_(make_table(config), engine_config(config)),
        notifier_(std::make_shared<Notifier>()), submitted_(program.steps.size(), false) {
    result_.history.name = program.source_name;
    result_.history.config = config_echo(config);
    result_.history.metadata = program.metadata;
  }

  ExecutionResult run() {
    if (config_.mode == ExecMode::SYNC) {
      run_sync();
    } else {
      run_async();
    }
    teardown();
    result_.final_table = engine_.snapshot();
    result_.lock_events = engine_.lock_events();
    result_.history.stuck = result_.stuck;
    return std::move(result_);
  }

 private:
  enum class Phase : std::uint8_t { RUNNING, BLOCKED };
  enum class TxnPhase : std::uint8_t { FRESH, ACTIVE, DEADLOCKED, TERMINATED };

  struct Outstanding {
    std::size_t step = 0;
    std::uint64_t submit_seq = 0;
    std::size_t dispatch = 0;
    Phase phase = Phase::RUNNING;
    Clock::time_point deadline;
    std::optional<std::uint64_t> blocked_seq;
    bool block_pending = false;  // BLOCKED record queued but not yet numbered
  };

  struct Track {
    TxnPhase phase = TxnPhase::FRESH;
    std::optional<Outstanding> out;
    std::string final;
  };

  struct Entry {
    std::size_t step = 0;
    int group = 1;
    bool blocked = false;
    WorkerResponse response;
    std::uint64_t submit_seq = 0;
  };

  static CanonicalTable make_table(const ExecutorConfig &config) {
    auto table = build_canonical_table(config.rows);
    if (!config.indexes) {
      for (auto c : kAllColumns) {
        if (c != Column::RECKEY) table.indexed.reset(static_cast<std::size_t>(c));
      }
    }
    return table;
  }

  static EngineConfig engine_config(const ExecutorConfig &config) {
    EngineConfig e = config.engine;
    e.record_lock_events = true;
    return e;
  }

  Worker &worker(TxnId txn) {
    auto &w = workers_[txn];
    if (!w) w = std::make_unique<Worker>(engine_, txn, notifier_);
    return *w;
  }

  std::chrono::milliseconds global_timeout() const { return config_.global_timeout.value_or(config_.timeout); }

  bool remaining() const {
    return std::find(submitted_.begin(), submitted_.end(), false) != submitted_.end();
  }

  bool any_running() const {
    for (const auto &[_, t] : tracks_) {
      if (t.out && t.out->phase == Phase::RUNNING) return true;
    }
    return false;
  }

  std::optional<std::size_t> next_submittable() const {
    for (std::size_t i = 0; i < program_.steps.size(); ++i) {
      if (submitted_[i]) continue;
      const auto &s = program_.steps[i];
      if (is_declarative(s.kind)) return i;
      auto it = tracks_.find(s.txn);
      if (it == tracks_.end() || !it->second.out) return i;
    }
    return std::nullopt;
  }

  void declare(const Step &s) {
    if (s.kind == OpKind::MAP) {
      env_.row_vars[*s.row_var] = *s.literal;
    } else {
      env_.pred_vars[*s.pred_var] = *s.predicate;
      result_.history.predicates[*s.pred_var] = render_predicate(*s.predicate);
    }
  }

  // Starts the transaction at the default level when its first step is not IL.
  void implicit_begin(TxnId txn) {
    WorkerRequest req;
    req.kind = WorkerRequest::Kind::BEGIN;
    req.level = config_.default_level;
    auto &w = worker(txn);
    w.send(req);
    auto frame = w.responses().receive_until(Clock::now() + global_timeout() + config_.timeout);
    if (!frame) throw std::runtime_error("worker did not answer BEGIN");
    result_.history.levels.emplace(txn, config_.default_level);
    tracks_[txn].phase = TxnPhase::ACTIVE;
  }

  // Returns false when the step was settled without dispatch (declarative or unresolvable).
  bool submit(std::size_t i) {
    submitted_[i] = true;
    const Step &s = program_.steps[i];
    if (is_declarative(s.kind)) {
      declare(s);
      return false;
    }
    auto &track = tracks_[s.txn];
    worker(s.txn);
    if (s.kind == OpKind::IL) {
      result_.history.levels.emplace(s.txn, *s.level);
      track.phase = TxnPhase::ACTIVE;
    } else if (track.phase == TxnPhase::FRESH || track.phase == TxnPhase::TERMINATED) {
      implicit_begin(s.txn);
    }
    const std::uint64_t submit_seq = ++submit_seq_;
    auto res = resolve_step(s, env_, config_.rows);
    if (!res.request) {
      OutputRecord r;
      r.seq = ++record_seq_;
      r.submit_seq = submit_seq;
      r.txn = s.txn;
      r.op = render_step(s, &env_.row_vars);
      r.status = RecordStatus::ERROR;
      r.error = res.error;
      result_.history.records.push_back(std::move(r));
      return false;
    }
    DispatchRecord d;
    d.step_index = i;
    d.txn = s.txn;
    d.submit_event = ++event_seq_;
    result_.dispatch.push_back(d);
    Outstanding o;
    o.step = i;
    o.submit_seq = submit_seq;
    o.dispatch = result_.dispatch.size() - 1;
    o.deadline = Clock::now() + config_.timeout;
    track.out = o;
    worker(s.txn).send(*res.request);
    return true;
  }

  void on_frame(TxnId txn, const std::string &frame, std::vector<Entry> &round, std::optional<std::size_t> submitted) {
    auto &track = tracks_[txn];
    if (!track.out) return;  // late interim frame after teardown decisions
    auto &out = *track.out;
    const WorkerResponse resp = decode_response(frame);
    const int group = (submitted && *submitted == out.step && out.phase == Phase::RUNNING && !out.blocked_seq &&
                       !out.block_pending)
                          ? 0
                          : 1;
    switch (resp.kind) {
      case WorkerResponse::Kind::WAITING:
        out.phase = Phase::BLOCKED;
        if (!out.blocked_seq && !out.block_pending) {
          out.block_pending = true;
          round.push_back(Entry{out.step, group, true, resp, out.submit_seq});
        }
        return;
      case WorkerResponse::Kind::RESUMING:
        out.phase = Phase::RUNNING;
        out.deadline = Clock::now() + config_.timeout;
        return;
      default:
        break;
    }
    const Step &s = program_.steps[out.step];
    bind_results(s, resp, env_);
    auto &d = result_.dispatch[out.dispatch];
    d.completion_event = ++event_seq_;
    d.status = resp.kind == WorkerResponse::Kind::SUCCESS ? RecordStatus::OK : failure_status(resp.status);
    round.push_back(Entry{out.step, group, false, resp, out.submit_seq});
    track.out.reset();

    auto drop_cursors = [&] {
      for (auto it = env_.cursors.begin(); it != env_.cursors.end();) {
        it = it->first.first == txn ? env_.cursors.erase(it) : std::next(it);
      }
    };
    if (resp.kind == WorkerResponse::Kind::FAILURE && resp.status == Status::DEADLOCK_ABORT) {
      track.phase = TxnPhase::DEADLOCKED;
      track.final = "ABORTED_DEADLOCK";
      drop_cursors();
    } else if (s.kind == OpKind::C || s.kind == OpKind::A) {
      if (track.phase != TxnPhase::DEADLOCKED) {
        track.final = resp.kind == WorkerResponse::Kind::SUCCESS ? (s.kind == OpKind::C ? "COMMITTED" : "ABORTED")
                                                                 : track.final;
      }
      track.phase = TxnPhase::TERMINATED;
      drop_cursors();
    }
  }

  // A RUNNING operation produced nothing within the per-operation timeout.
  void on_timeout(TxnId txn, std::vector<Entry> &round, std::optional<std::size_t> submitted) {
    auto &out = *tracks_[txn].out;
    const int group = (submitted && *submitted == out.step && !out.blocked_seq && !out.block_pending) ? 0 : 1;
    out.phase = Phase::BLOCKED;
    if (!out.blocked_seq && !out.block_pending) {
      out.block_pending = true;
      WorkerResponse r;
      r.kind = WorkerResponse::Kind::WAITING;
      round.push_back(Entry{out.step, group, true, r, out.submit_seq});
    }
  }

  void flush(std::vector<Entry> &round, bool sort) {
    if (sort) {
      std::stable_sort(round.begin(), round.end(), [](const Entry &a, const Entry &b) {
        if (a.group != b.group) return a.group < b.group;
        return a.step < b.step;
      });
    }
    for (auto &e : round) {
      const Step &s = program_.steps[e.step];
      OutputRecord r;
      r.seq = ++record_seq_;
      r.submit_seq = e.submit_seq;
      r.txn = s.txn;
      r.op = render_step(s, &env_.row_vars);
      if (e.blocked) {
        r.status = RecordStatus::BLOCKED;
        blocked_seq_[e.step] = r.seq;
        auto &track = tracks_[s.txn];
        if (track.out && track.out->step == e.step) {
          track.out->blocked_seq = r.seq;
          track.out->block_pending = false;
        }
      } else {
        if (auto it = blocked_seq_.find(e.step); it != blocked_seq_.end()) r.resumes = it->second;
        if (e.response.kind == WorkerResponse::Kind::SUCCESS) {
          r.status = r.resumes ? RecordStatus::RESUMED : RecordStatus::OK;
          r.values = e.response.values;
          r.rows = e.response.rows;
          for (const auto &img : e.response.images) r.images.push_back(OutputImage{img.before, img.after});
        } else {
          r.status = failure_status(e.response.status);
          if (r.status == RecordStatus::ERROR) r.error = std::string(status_name(e.response.status));
        }
      }
      result_.history.records.push_back(std::move(r));
    }
    round.clear();
  }

  // Collects every frame already queued on any worker channel.
  bool poll(std::vector<Entry> &round, std::optional<std::size_t> submitted) {
    bool got = false;
    for (auto &[txn, w] : workers_) {
      while (auto frame = w->responses().try_receive()) {
        on_frame(txn, *frame, round, submitted);
        got = true;
      }
    }
    return got;
  }

  // Waits until no dispatched operation is still running, declaring stragglers BLOCKED on timeout.
  void settle(std::vector<Entry> &round, std::optional<std::size_t> submitted) {
    while (true) {
      const auto gen = notifier_->generation();
      poll(round, submitted);
      if (!any_running()) return;
      Clock::time_point deadline = Clock::time_point::max();
      for (const auto &[_, t] : tracks_) {
        if (t.out && t.out->phase == Phase::RUNNING) deadline = std::min(deadline, t.out->deadline);
      }
      if (!notifier_->wait_for_change(gen, deadline)) {
        if (poll(round, submitted)) continue;
        const auto now = Clock::now();
        for (auto &[txn, t] : tracks_) {
          if (t.out && t.out->phase == Phase::RUNNING && t.out->deadline <= now) on_timeout(txn, round, submitted);
        }
      }
    }
  }

  // Every remaining step is held up: give blocked work one global timeout to move.
  bool await_progress(std::vector<Entry> &round) {
    const auto deadline = Clock::now() + global_timeout();
    while (true) {
      const auto gen = notifier_->generation();
      if (poll(round, std::nullopt)) {
        for (auto &[_, t] : tracks_) {
          if (t.out && t.out->phase == Phase::RUNNING) t.out->deadline = Clock::now() + config_.timeout;
        }
        return true;
      }
      if (!notifier_->wait_for_change(gen, deadline) && Clock::now() >= deadline) return poll(round, std::nullopt);
    }
  }

  void run_sync() {
    std::vector<Entry> round;
    while (true) {
      if (auto i = next_submittable()) {
        if (submit(*i)) {
          settle(round, *i);
          flush(round, true);
        }
        continue;
      }
      if (!remaining()) return;
      if (!await_progress(round)) {
        result_.stuck = true;
        return;
      }
      settle(round, std::nullopt);
      flush(round, true);
    }
  }

  void run_async() {
    std::vector<Entry> round;
    while (true) {
      bool progressed = false;
      while (auto i = next_submittable()) {
        submit(*i);
        progressed = true;
      }
      const auto gen = notifier_->generation();
      if (poll(round, std::nullopt)) {
        flush(round, false);
        continue;
      }
      if (progressed) continue;
      bool outstanding = false;
      for (const auto &[_, t] : tracks_) outstanding = outstanding || t.out.has_value();
      if (!outstanding && !remaining()) return;
      if (!any_running()) {
        if (!remaining()) return;
        if (!await_progress(round)) {
          result_.stuck = true;
          return;
        }
        flush(round, false);
        continue;
      }
      Clock::time_point deadline = Clock::time_point::max();
      for (const auto &[_, t] : tracks_) {
        if (t.out && t.out->phase == Phase::RUNNING) deadline = std::min(deadline, t.out->deadline);
      }
      if (!notifier_->wait_for_change(gen, deadline) && !poll(round, std::nullopt)) {
        const auto now = Clock::now();
        for (auto &[txn, t] : tracks_) {
          if (t.out && t.out->phase == Phase::RUNNING && t.out->deadline <= now) on_timeout(txn, round, std::nullopt);
        }
      }
      flush(round, false);
    }
  }

  void teardown() {
    for (auto &[txn, t] : tracks_) {
      if (t.out) {
        result_.history.final_status[txn] = "BLOCKED";
      } else if (t.phase == TxnPhase::TERMINATED || t.phase == TxnPhase::DEADLOCKED) {
        result_.history.final_status[txn] = t.final;
      } else if (t.phase == TxnPhase::ACTIVE) {
        result_.history.final_status[txn] = "ACTIVE";
      }
    }
    WorkerRequest fin;
    fin.kind = WorkerRequest::Kind::FINALIZE;
    for (auto &[_, w] : workers_) w->send(fin);
    // Cancelled waiters return to their worker loop, which then reads FINALIZE and rolls back.
    while (true) {
      engine_.cancel_waiters();
      bool done = true;
      for (auto &[_, w] : workers_) done = done && w->finished();
      if (done) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    for (auto &[_, w] : workers_) w->join();
  }

  const HistoryProgram &program_;
  ExecutorConfig config_;
  Engine engine_;
  std::shared_ptr<Notifier> notifier_;
  std::map<TxnId, std::unique_ptr<Worker>> workers_;
  std::map<TxnId, Track> tracks_;
  std::map<std::size_t, std::uint64_t> blocked_seq_;
  std::vector<bool> submitted_;
  BindingEnv env_;
  ExecutionResult result_;
  std::uint64_t record_seq_ = 0;
  std::uint64_t submit_seq_ = 0;
  std::uint64_t event_seq_ = 0;
};

}  // namespace

ExecutionResult run_history(const HistoryProgram &program, const ExecutorConfig &config) {
  Monitor monitor(program, config);
  return monitor.run();
}

}  // namespace histex
