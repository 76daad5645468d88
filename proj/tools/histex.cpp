#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "histex/analyzer.h"
#include "histex/campaign.h"
#include "histex/dataset.h"
#include "histex/errors.h"
#include "histex/executor.h"
#include "histex/generator.h"
#include "histex/notation.h"
#include "histex/outhist.h"

namespace fs = std::filesystem;
using namespace histex;

namespace {

struct EngineFlags {
  std::string mode = "sync";
  bool concurrent = false;
  double timeout = 0;
  std::string default_level = "SR";
  std::int64_t rows = 200;
  bool no_indexes = false;
  std::string lock_scope = "predicate";
  std::string strictness = "per-level";
  std::string victim = "youngest";
  bool ru_writes_allowed = false;
  bool skip_read_locks = false;

  void attach(CLI::App *app, bool with_mode) {
    if (with_mode) {
      app->add_option("--mode", mode, "sync or async")->check(CLI::IsMember({"sync", "async"}));
      app->add_flag("-c", concurrent, "same as --mode async");
    }
    app->add_option("--timeout", timeout, "per-operation timeout in seconds (default 2, or HISTEX_TIMEOUT)");
    app->add_option("--default-level", default_level, "level of transactions without IL")
        ->check(CLI::IsMember({"RU", "RC", "RR", "SR"}, CLI::ignore_case));
    app->add_option("--rows", rows, "rows in the canonical table (multiple of 100)");
    app->add_flag("--no-indexes", no_indexes, "drop the kN indexes (only reckey stays indexed)");
    app->add_option("--lock-scope", lock_scope)->check(CLI::IsMember({"predicate", "incremental"}));
    app->add_option("--strictness", strictness)->check(CLI::IsMember({"per-level", "strict"}));
    app->add_option("--victim", victim, "deadlock victim rule")->check(CLI::IsMember({"youngest", "requester"}));
    app->add_flag("--ru-writes-allowed", ru_writes_allowed, "let RU transactions write");
    app->add_flag("--skip-read-locks", skip_read_locks, "fault injection: reads at RC and above take no locks");
  }

  ExecutorConfig config() const {
    ExecutorConfig c = apply_environment(ExecutorConfig{});
    c.mode = (mode == "async" || concurrent) ? ExecMode::ASYNC : ExecMode::SYNC;
    if (timeout > 0) c.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout * 1000));
    c.default_level = *level_from_name(default_level);
    c.rows = rows;
    c.indexes = !no_indexes;
    c.engine.lock_scope = lock_scope == "incremental" ? LockScope::INCREMENTAL_RANGE : LockScope::PREDICATE;
    c.engine.strictness = strictness == "strict" ? Strictness::STRICT_ALL_LONG : Strictness::PER_LEVEL;
    c.engine.victim_rule = victim == "requester" ? VictimRule::REQUESTER : VictimRule::YOUNGEST;
    c.engine.ru_writes_allowed = ru_writes_allowed;
    c.engine.skip_read_locks = skip_read_locks;
    return c;
  }
};

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<HistoryClass> parse_classes(const std::string &text) {
  if (text.empty()) return {std::begin(kAllClasses), std::end(kAllClasses)};
  std::vector<HistoryClass> out;
  for (const auto &name : split_list(text)) {
    auto c = class_from_name(name);
    if (!c) throw CLI::ValidationError("--classes", "unknown class " + name);
    out.push_back(*c);
  }
  return out;
}

std::vector<IsolationLevel> parse_levels(const std::string &text) {
  if (text.empty()) return {std::begin(kMatrixLevels), std::end(kMatrixLevels)};
  std::vector<IsolationLevel> out;
  for (const auto &name : split_list(text)) {
    auto l = level_from_name(name);
    if (!l) throw CLI::ValidationError("--levels", "unknown level " + name);
    out.push_back(*l);
  }
  return out;
}

void write_output(const std::string &path, const std::string &text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"histex: run transactional histories against a lock-based reference engine"};
  app.require_subcommand(1);

  auto *dataset = app.add_subcommand("dataset", "canonical table utilities");
  auto *dump = dataset->add_subcommand("dump", "print the canonical table as TSV");
  std::int64_t dump_rows = 200;
  dump->add_option("--rows", dump_rows, "row count (multiple of 100)");
  dataset->require_subcommand(1);

  auto *gen = app.add_subcommand("gen", "generate template histories");
  std::string gen_classes, gen_levels, gen_variants, gen_out;
  bool gen_ru = false;
  gen->add_option("--classes", gen_classes, "comma list of w_w,w_r,r_w,w_pr,pr_w");
  gen->add_option("--levels", gen_levels, "comma list of RC,RR,SR");
  gen->add_option("--variants", gen_variants, "comma list of insert,delete,update,partial");
  gen->add_option("--out", gen_out, "directory for numbered .hist files (stdout if omitted)");
  gen->add_flag("--ru", gen_ru, "also emit the RU scenario");

  auto *run = app.add_subcommand("run", "execute one history");
  std::string run_file, run_out;
  bool verbose = false;
  run->add_option("file", run_file, ".hist file")->required();
  run->add_option("-o,--out", run_out, "output history file (stdout if omitted)");
  run->add_flag("--verbose", verbose, "mirror the output history on stdout");
  EngineFlags run_flags;
  run_flags.attach(run, true);

  auto *analyze_cmd = app.add_subcommand("analyze", "judge output histories");
  std::vector<std::string> analyze_files;
  analyze_cmd->add_option("files", analyze_files, ".outhist files")->required();

  auto *campaign = app.add_subcommand("campaign", "generate, run and analyze the class x level matrix");
  std::string camp_classes, camp_levels, camp_variants, camp_json;
  int parallel = 1;
  campaign->add_option("--classes", camp_classes);
  campaign->add_option("--levels", camp_levels);
  campaign->add_option("--variants", camp_variants);
  campaign->add_option("--json", camp_json, "also write the report as JSON");
  campaign->add_option("--parallel", parallel, "histories run at once");
  EngineFlags camp_flags;
  camp_flags.attach(campaign, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (dump->parsed()) {
      std::cout << dump_tsv(build_canonical_table(dump_rows));
      return 0;
    }

    if (gen->parsed()) {
      auto programs = generate_matrix(parse_levels(gen_levels), parse_classes(gen_classes), split_list(gen_variants));
      if (gen_ru) programs.push_back(ru_scenario());
      if (gen_out.empty()) {
        for (const auto &p : programs) std::cout << "# " << p.source_name << "\n" << render_history(p) << "\n\n";
        return 0;
      }
      fs::create_directories(gen_out);
      int n = 0;
      for (const auto &p : programs) {
        std::ostringstream name;
        name << std::setw(3) << std::setfill('0') << ++n << "_" << p.source_name << ".hist";
        write_output((fs::path(gen_out) / name.str()).string(), render_history(p) + "\n");
      }
      std::cerr << "wrote " << n << " histories to " << gen_out << "\n";
      return 0;
    }

    if (run->parsed()) {
      HistoryProgram program;
      try {
        program = parse_history(read_file(run_file), fs::path(run_file).stem().string());
      } catch (const SyntaxError &e) {
        std::cerr << run_file << ": syntax error at offset " << e.position() << ": " << e.what() << "\n";
        return 1;
      } catch (const SemanticError &e) {
        std::cerr << run_file << ": " << e.what() << "\n";
        return 1;
      }
      if (program.unterminated) std::cerr << run_file << ": warning: some transaction never commits or aborts\n";
      const auto result = run_history(program, run_flags.config());
      const auto text = serialize(result.history);
      write_output(run_out, text);
      if (verbose && !run_out.empty() && run_out != "-") std::cout << text;
      if (result.stuck) {
        std::cerr << run_file << ": history stuck: no blocked operation progressed within the timeout\n";
        return 2;
      }
      return 0;
    }

    if (analyze_cmd->parsed()) {
      std::map<std::string, std::map<std::string, int>> summary;
      int status = 0;
      for (const auto &file : analyze_files) {
        OutputHistory h;
        try {
          h = parse_output(read_file(file));
        } catch (const FormatError &e) {
          std::cerr << file << ": " << e.what() << "\n";
          status = 1;
          continue;
        }
        const auto verdict = analyze(h);
        std::cout << file << ": " << verdict_name(verdict.kind);
        for (const auto &p : verdict.violations) {
          std::cout << " violation=" << class_name(p.cls) << "@" << p.resource << "(T" << p.first_txn << ",T"
                    << p.second_txn << ")";
        }
        for (const auto &p : verdict.over_restrictive) {
          std::cout << " over-restrictive=" << class_name(p.cls) << "@" << p.resource << "(T" << p.first_txn << ",T"
                    << p.second_txn << ")";
        }
        for (auto i : verdict.ru_writes) std::cout << " ru-write=" << h.records[i].op;
        if (!verdict.reason.empty()) std::cout << " (" << verdict.reason << ")";
        std::cout << "\n";
        std::string row = "unclassified", col = "-";
        if (auto c = class_from_metadata(h.metadata)) row = std::string(class_name(*c));
        if (h.metadata.count("l1") && h.metadata.count("l2")) col = h.metadata.at("l1") + "_" + h.metadata.at("l2");
        ++summary[row + " " + col][std::string(verdict_name(verdict.kind))];
      }
      std::cout << "\nsummary (class level-pair: verdict counts)\n";
      for (const auto &[cell, counts] : summary) {
        std::cout << cell << ":";
        for (const auto &[v, n] : counts) std::cout << " " << v << "=" << n;
        std::cout << "\n";
      }
      return status;
    }

    if (campaign->parsed()) {
      CampaignOptions opts;
      opts.classes = parse_classes(camp_classes);
      opts.levels = parse_levels(camp_levels);
      opts.variants = split_list(camp_variants);
      opts.exec = camp_flags.config();
      opts.parallel = parallel;
      const auto report = run_campaign(opts);
      std::cout << report.render_grid();
      if (!camp_json.empty()) write_output(camp_json, report.to_json());
      const bool per_level = opts.exec.engine.strictness == Strictness::PER_LEVEL;
      return per_level && report.has_findings() ? 3 : 0;
    }
  } catch (const std::exception &e) {
    std::cerr << "histex: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
