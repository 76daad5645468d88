#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>

#include "histex/executor.h"
#include "histex/generator.h"

using namespace histex;
using namespace std::chrono_literals;

namespace {

ExecutionResult run(std::string_view text, ExecutorConfig config = {}) {
  return run_history(parse_history(text, "t"), config);
}

std::vector<std::string> lines(const OutputHistory &h) {
  std::vector<std::string> out;
  for (const auto &r : h.records) {
    std::string s = r.op + " " + std::string(record_status_name(r.status));
    if (r.status == RecordStatus::ERROR) s += "(" + r.error + ")";
    out.push_back(s);
  }
  return out;
}

std::int64_t recval(const ExecutionResult &r, Key key) { return r.final_table.rows.at(key).get(Column::RECVAL); }

}  // namespace

TEST(Executor, WriteWriteAtRC) {
  auto r = run("IL1(RC) IL2(RC) W1(A,1001) W2(A,2002) C1 C2");
  EXPECT_EQ(lines(r.history), (std::vector<std::string>{"IL1(RC) OK", "IL2(RC) OK", "W1(A=100,1001) OK",
                                                        "W2(A=100,2002) BLOCKED", "C1 OK", "W2(A=100,2002) RESUMED",
                                                        "C2 OK"}));
  EXPECT_EQ(r.history.records[5].resumes, 4u);
  EXPECT_EQ(r.history.records[5].submit_seq, 4u);
  EXPECT_EQ(recval(r, 100), 2002);
  EXPECT_FALSE(r.stuck);
  EXPECT_EQ(r.history.final_status.at(1), "COMMITTED");
  EXPECT_EQ(r.history.final_status.at(2), "COMMITTED");
}

TEST(Executor, ImplicitBeginAtDefaultLevel) {
  ExecutorConfig cfg;
  cfg.default_level = IsolationLevel::RC;
  auto r = run("R1(A) C1", cfg);
  EXPECT_EQ(r.history.levels.at(1), IsolationLevel::RC);
  EXPECT_EQ(r.history.records.size(), 2u);
  EXPECT_EQ(r.history.records[0].values, std::vector<std::int64_t>{10000});
}

TEST(Executor, ValueVariablesFlowBetweenTransactions) {
  auto r = run("R1(A,X) C1 W2(B,X) C2");
  EXPECT_EQ(recval(r, 200), 10000);
  EXPECT_EQ(r.history.records[2].op, "W2(B=200,X)");
}

TEST(Executor, UnboundValueVariable) {
  auto r = run("W1(A) R2(A) R3(B) W3(B,X0) C1 C2 C3");
  auto l = lines(r.history);
  EXPECT_EQ(l[1], "R2(A=100) BLOCKED");
  EXPECT_EQ(l[3], "W3(B=200,X0) ERROR(UnboundVariable)");
  EXPECT_EQ(r.history.records[5].values, std::vector<std::int64_t>{10001});
}

TEST(Executor, MapAndPredicateBinding) {
  auto r = run("MAP(B, 700) PRED(P, k2=0 and k3=0) PR1(P;recval;2;A,X) R1(B) W1(A,X) C1");
  ASSERT_EQ(r.history.records.size(), 4u);
  EXPECT_EQ(r.history.records[0].rows, (std::vector<FetchedRow>{{100, 10000}, {700, 70000}}));
  EXPECT_EQ(r.history.records[1].values, std::vector<std::int64_t>{70000});
  // A and X hold the last fetched row.
  EXPECT_EQ(r.history.records[2].op, "W1(A=700,X)");
  EXPECT_EQ(recval(r, 700), 70000);
  EXPECT_EQ(r.history.predicates.at("P"), "k2=0 and k3=0");
}

TEST(Executor, UnboundPredicate) {
  auto r = run("PR1(Q;recval;1) C1");
  EXPECT_EQ(lines(r.history)[0], "PR1(Q;recval;1) ERROR(UnboundPredicate)");
}

TEST(Executor, InsertBindsKey) {
  auto r = run("I1(B;k2;k3,0;0) W1(B,5) C1");
  EXPECT_EQ(r.history.records[1].op, "W1(B=150,5)");
  EXPECT_EQ(recval(r, 150), 5);
}

TEST(Executor, DeadlockVictim) {
  auto r = run("W1(A) W2(B) W1(B) W2(A) C1 C2");
  EXPECT_EQ(lines(r.history), (std::vector<std::string>{"W1(A=100) OK", "W2(B=200) OK", "W1(B=200) BLOCKED",
                                                        "W2(A=100) ABORTED_DEADLOCK", "W1(B=200) RESUMED", "C1 OK",
                                                        "C2 ERROR(TxnAborted)"}));
  EXPECT_EQ(r.history.final_status.at(2), "ABORTED_DEADLOCK");
  EXPECT_EQ(recval(r, 200), 20001);
}

TEST(Executor, StuckHistory) {
  ExecutorConfig cfg;
  cfg.timeout = 100ms;
  auto r = run("W1(A) R2(A) C2", cfg);
  EXPECT_TRUE(r.stuck);
  EXPECT_TRUE(r.history.stuck);
  EXPECT_EQ(r.history.final_status.at(1), "ACTIVE");
  EXPECT_EQ(r.history.final_status.at(2), "BLOCKED");
  // Teardown rolled T1 back.
  EXPECT_EQ(recval(r, 100), 10000);
}

TEST(Executor, ReadOnlyAtRU) {
  auto r = run_history(ru_scenario(), {});
  bool saw = false;
  for (const auto &rec : r.history.records) {
    if (rec.op.rfind("W2(", 0) == 0) {
      EXPECT_EQ(rec.status, RecordStatus::READONLY_VIOLATION);
      saw = true;
    }
  }
  EXPECT_TRUE(saw);
  EXPECT_EQ(recval(r, 100), 10000);
  EXPECT_EQ(recval(r, 200), 20000);
}

TEST(Executor, AsyncRunsIndependentStepsPastABlockedOne) {
  ExecutorConfig cfg;
  cfg.mode = ExecMode::ASYNC;
  auto r = run("W1(A,1001) W2(A,2002) R3(B) C3 C1 C2", cfg);
  EXPECT_FALSE(r.stuck);
  EXPECT_EQ(recval(r, 100), 2002);
  const DispatchRecord *w2 = nullptr, *r3 = nullptr;
  for (const auto &d : r.dispatch) {
    if (d.step_index == 1) w2 = &d;
    if (d.step_index == 2) r3 = &d;
  }
  ASSERT_TRUE(w2 && r3);
  ASSERT_TRUE(w2->completion_event && r3->completion_event);
  EXPECT_LT(r3->submit_event, *w2->completion_event);
  for (const auto &[t, s] : r.history.final_status) EXPECT_EQ(s, "COMMITTED") << t;
}

TEST(Executor, AsyncMatchesSyncOnDisjointTransactions) {
  const char *text = "IL1(RC) R1(A) W1(A,7) C1 IL2(SR) RW2(B,X) W2(C,X) C2";
  ExecutorConfig async;
  async.mode = ExecMode::ASYNC;
  auto s = run(text);
  auto a = run(text, async);
  EXPECT_EQ(s.final_table, a.final_table);
  auto ls = lines(s.history), la = lines(a.history);
  std::sort(ls.begin(), ls.end());
  std::sort(la.begin(), la.end());
  EXPECT_EQ(ls, la);
  EXPECT_EQ(recval(a, 300), 20000);
}

TEST(Executor, LockEventsCaptured) {
  auto r = run("W1(A) C1");
  EXPECT_FALSE(r.lock_events.empty());
}

TEST(Executor, SmallerTable) {
  ExecutorConfig cfg;
  cfg.rows = 100;
  auto r = run("MAP(A, 10000) R1(A) C1", cfg);
  EXPECT_EQ(r.final_table.rows.size(), 100u);
  EXPECT_EQ(r.history.records[0].values, std::vector<std::int64_t>{1000000});
}

TEST(BindingEnv, LowestFreeKey) {
  BindingEnv env;
  EXPECT_EQ(env.bind_row("A", 200), 100);
  EXPECT_EQ(env.bind_row("B", 200), 200);
  EXPECT_EQ(env.bind_row("A", 200), 100);
  env.row_vars["C"] = 300;
  EXPECT_EQ(env.bind_row("D", 200), 400);
}

TEST(ResolveStep, Requests) {
  BindingEnv env;
  env.row_vars["A"] = 100;
  auto prog = parse_history("R1(B) W3(B,X0) W1(A,1001) I2(C;k2,0) D1(A) C1");
  auto r = resolve_step(prog.steps[0], env, 200);
  ASSERT_TRUE(r.request);
  EXPECT_EQ(r.request->kind, WorkerRequest::Kind::READ);
  EXPECT_EQ(r.request->key, 200);

  auto w = resolve_step(prog.steps[1], env, 200);
  EXPECT_FALSE(w.request);
  EXPECT_EQ(w.error, "UnboundVariable");
  env.value_vars["X0"] = 42;
  w = resolve_step(prog.steps[1], env, 200);
  ASSERT_TRUE(w.request);
  EXPECT_EQ(w.request->values, (std::vector<std::pair<Column, std::int64_t>>{{Column::RECVAL, 42}}));

  auto lit = resolve_step(prog.steps[2], env, 200);
  EXPECT_EQ(encode_request(*lit.request), "WRITE 100 recval=1001\n");
  auto ins = resolve_step(prog.steps[3], env, 200);
  EXPECT_EQ(encode_request(*ins.request), "INSERT 0 k2=0\n");
  EXPECT_EQ(encode_request(*resolve_step(prog.steps[4], env, 200).request), "DELETE 100\n");
  EXPECT_EQ(encode_request(*resolve_step(prog.steps[5], env, 200).request), "COMMIT\n");
}

TEST(BindResults, ValueAndInsertKey) {
  BindingEnv env;
  auto prog = parse_history("R1(A,X) I1(B;k2,0) C1");
  WorkerResponse read;
  read.values = {10000};
  bind_results(prog.steps[0], read, env);
  EXPECT_EQ(env.value_vars.at("X"), 10000);
  WorkerResponse ins;
  ins.key = 150;
  bind_results(prog.steps[1], ins, env);
  EXPECT_EQ(env.row_vars.at("B"), 150);
}

TEST(Environment, TimeoutOverride) {
  ::setenv("HISTEX_TIMEOUT", "0.5", 1);
  EXPECT_EQ(apply_environment({}).timeout, 500ms);
  ::setenv("HISTEX_TIMEOUT", "soon", 1);
  EXPECT_EQ(apply_environment({}).timeout, 2000ms);
  ::unsetenv("HISTEX_TIMEOUT");
}

TEST(Environment, ConfigEcho) {
  ExecutorConfig cfg;
  cfg.engine.lock_scope = LockScope::INCREMENTAL_RANGE;
  auto echo = config_echo(cfg);
  bool found = false;
  for (const auto &[k, v] : echo) {
    if (k == "lock-scope") {
      EXPECT_EQ(v, "incremental");
      found = true;
    }
  }
  EXPECT_TRUE(found);
}
