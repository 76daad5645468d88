#include "histex/notation.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "histex/errors.h"

namespace histex {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::PRED:
      return "PRED";
    case OpKind::MAP:
      return "MAP";
    case OpKind::IL:
      return "IL";
    case OpKind::R:
      return "R";
    case OpKind::W:
      return "W";
    case OpKind::RW:
      return "RW";
    case OpKind::I:
      return "I";
    case OpKind::D:
      return "D";
    case OpKind::PR:
      return "PR";
    case OpKind::SU:
      return "SU";
    case OpKind::SS:
      return "SS";
    case OpKind::C:
      return "C";
    case OpKind::A:
      return "A";
  }
  return "?";
}

bool is_declarative(OpKind kind) { return kind == OpKind::PRED || kind == OpKind::MAP; }

bool is_write(OpKind kind) {
  return kind == OpKind::W || kind == OpKind::RW || kind == OpKind::I || kind == OpKind::D || kind == OpKind::SU;
}

bool Step::operator==(const Step &o) const {
  return kind == o.kind && txn == o.txn && row_var == o.row_var && value_var == o.value_var &&
         pred_var == o.pred_var && literal == o.literal && column_spec == o.column_spec &&
         value_spec == o.value_spec && row_limit == o.row_limit && aggregate == o.aggregate && level == o.level &&
         predicate == o.predicate;
}

std::vector<TxnId> HistoryProgram::transactions() const {
  std::vector<TxnId> out;
  for (const auto &s : steps) {
    if (s.txn != 0 && std::find(out.begin(), out.end(), s.txn) == out.end()) out.push_back(s.txn);
  }
  return out;
}

bool HistoryProgram::operator==(const HistoryProgram &o) const { return steps == o.steps && metadata == o.metadata; }

namespace {

struct Piece {
  std::string_view text;
  std::size_t offset;  // absolute
};

std::optional<OpKind> kind_from_name(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  static const std::pair<std::string_view, OpKind> kNames[] = {
      {"PRED", OpKind::PRED}, {"MAP", OpKind::MAP}, {"IL", OpKind::IL}, {"R", OpKind::R},   {"W", OpKind::W},
      {"RW", OpKind::RW},     {"I", OpKind::I},     {"D", OpKind::D},   {"PR", OpKind::PR}, {"SU", OpKind::SU},
      {"SS", OpKind::SS},     {"C", OpKind::C},     {"A", OpKind::A},
  };
  for (const auto &[n, k] : kNames) {
    if (n == upper) return k;
  }
  return std::nullopt;
}

bool is_ident(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

Piece trim(Piece p) {
  std::size_t b = 0;
  std::size_t e = p.text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(p.text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(p.text[e - 1]))) --e;
  return Piece{p.text.substr(b, e - b), p.offset + b};
}

// Splits on `sep` outside parentheses and double quotes.
std::vector<Piece> split_top(Piece p, char sep) {
  std::vector<Piece> out;
  int depth = 0;
  bool quoted = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < p.text.size(); ++i) {
    const char c = p.text[i];
    if (c == '"') {
      quoted = !quoted;
    } else if (!quoted && c == '(') {
      ++depth;
    } else if (!quoted && c == ')') {
      --depth;
    } else if (!quoted && depth == 0 && c == sep) {
      out.push_back(trim(Piece{p.text.substr(start, i - start), p.offset + start}));
      start = i + 1;
    }
  }
  out.push_back(trim(Piece{p.text.substr(start), p.offset + start}));
  return out;
}

class HistoryParser {
 public:
  explicit HistoryParser(std::string_view text) : text_(text) {}

  HistoryProgram parse(std::string source_name) {
    HistoryProgram program;
    program.source_name = std::move(source_name);
    while (true) {
      skip_space_and_comments(program);
      if (pos_ >= text_.size()) break;
      program.steps.push_back(parse_operation());
    }
    validate(program);
    return program;
  }

 private:
  void skip_space_and_comments(HistoryProgram &program) {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '#') {
        const std::size_t eol = std::min(text_.find('\n', pos_), text_.size());
        const std::string_view line = text_.substr(pos_, eol - pos_);
        if (line.size() > 1 && line[1] == '@') read_metadata(line.substr(2), pos_ + 2, program);
        pos_ = eol;
      } else {
        break;
      }
    }
  }

  void read_metadata(std::string_view body, std::size_t offset, HistoryProgram &program) {
    auto t = trim(Piece{body, offset});
    const auto eq = t.text.find('=');
    if (eq == std::string_view::npos) throw SyntaxError(t.offset, std::string(t.text), "metadata line needs key=value");
    auto key = trim(Piece{t.text.substr(0, eq), t.offset});
    auto value = trim(Piece{t.text.substr(eq + 1), t.offset + eq + 1});
    if (!is_ident(key.text)) throw SyntaxError(key.offset, std::string(key.text), "bad metadata key");
    program.metadata[std::string(key.text)] = std::string(value.text);
  }

  std::string token_at(std::size_t start) const {
    std::size_t end = start;
    while (end < text_.size() && !std::isspace(static_cast<unsigned char>(text_[end]))) ++end;
    return std::string(text_.substr(start, end - start));
  }

  [[noreturn]] void syntax(std::size_t at, const std::string &why) const {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < at && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    const auto token = token_at(at);
    throw SyntaxError(at, token,
                      std::to_string(line) + ":" + std::to_string(col) + ": " + why + " near '" + token + "'");
  }

  // Reads ASCII digits or UTF-8 subscript digits (U+2080..U+2089).
  std::string read_subscript() {
    std::string digits;
    while (pos_ < text_.size()) {
      const auto c = static_cast<unsigned char>(text_[pos_]);
      if (std::isdigit(c)) {
        digits += static_cast<char>(c);
        ++pos_;
      } else if (c == 0xE2 && pos_ + 2 < text_.size() && static_cast<unsigned char>(text_[pos_ + 1]) == 0x82 &&
                 static_cast<unsigned char>(text_[pos_ + 2]) >= 0x80 &&
                 static_cast<unsigned char>(text_[pos_ + 2]) <= 0x89) {
        digits += static_cast<char>('0' + (static_cast<unsigned char>(text_[pos_ + 2]) - 0x80));
        pos_ += 3;
      } else {
        break;
      }
    }
    return digits;
  }

  Step parse_operation() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const auto name = text_.substr(start, pos_ - start);
    auto kind = kind_from_name(name);
    if (!kind) syntax(start, "unknown operation");

    Step step;
    step.kind = *kind;
    step.position = start;

    const std::size_t sub_at = pos_;
    const auto subscript = read_subscript();
    if (is_declarative(*kind)) {
      if (!subscript.empty()) syntax(sub_at, "declarative operation takes no transaction subscript");
    } else {
      if (subscript.empty()) syntax(start, "missing transaction subscript");
      auto n = to_int(subscript);
      if (!n || *n < 1 || *n > 1000000) syntax(sub_at, "transaction subscript must be a positive integer");
      step.txn = static_cast<TxnId>(*n);
    }

    if (*kind == OpKind::C || *kind == OpKind::A) {
      if (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '#') {
        syntax(start, "unexpected characters after operation");
      }
      return step;
    }

    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    if (pos_ >= text_.size() || text_[pos_] != '(') syntax(start, "expected '('");
    const std::size_t open = pos_;
    int depth = 0;
    bool quoted = false;
    for (; pos_ < text_.size(); ++pos_) {
      const char c = text_[pos_];
      if (c == '"') {
        quoted = !quoted;
      } else if (!quoted && c == '(') {
        ++depth;
      } else if (!quoted && c == ')') {
        if (--depth == 0) break;
      }
    }
    if (pos_ >= text_.size()) syntax(start, "unterminated argument list");
    const Piece args{text_.substr(open + 1, pos_ - open - 1), open + 1};
    ++pos_;
    if (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '#') {
      syntax(start, "unexpected characters after operation");
    }
    fill_arguments(step, args);
    return step;
  }

  std::string ident(const Piece &p, const char *what) const {
    if (!is_ident(p.text)) syntax(p.offset, std::string("expected ") + what);
    return std::string(p.text);
  }

  std::int64_t integer(const Piece &p, const char *what) const {
    auto v = to_int(p.text);
    if (!v) syntax(p.offset, std::string("expected ") + what);
    return *v;
  }

  Column column(const Piece &p) const {
    auto c = column_from_name(p.text);
    if (!c) throw UnknownColumn(std::string(p.text));
    return *c;
  }

  void arity(const Step &step, const std::vector<Piece> &args, std::size_t lo, std::size_t hi) const {
    if (args.size() < lo || args.size() > hi || (args.size() == 1 && args[0].text.empty())) {
      syntax(step.position, "wrong number of arguments");
    }
  }

  // "A" or "A;col1;col2"
  void row_and_columns(Step &step, const Piece &p) const {
    auto parts = split_top(p, ';');
    step.row_var = ident(parts[0], "row variable");
    for (std::size_t i = 1; i < parts.size(); ++i) step.column_spec.push_back(column(parts[i]));
  }

  void value_list(Step &step, const Piece &p) const {
    for (const auto &part : split_top(p, ';')) step.value_spec.push_back(integer(part, "integer value"));
    if (step.value_spec.size() != step.column_spec.size()) {
      throw SemanticError("column list and value list differ in length at offset " + std::to_string(p.offset));
    }
  }

  std::string pred_ref(const Piece &p) const {
    Piece q = p;
    if (!q.text.empty() && q.text[0] == '%') q = Piece{q.text.substr(1), q.offset + 1};
    return ident(q, "predicate variable");
  }

  void fill_arguments(Step &step, const Piece &all) {
    auto args = split_top(all, ',');
    switch (step.kind) {
      case OpKind::PRED: {
        if (args.size() < 2) syntax(step.position, "PRED needs a variable and an expression");
        step.pred_var = ident(args[0], "predicate variable");
        const std::size_t expr_start = args[1].offset - all.offset;
        Piece expr = trim(Piece{all.text.substr(expr_start), args[1].offset});
        if (expr.text.size() >= 2 && expr.text.front() == '"' && expr.text.back() == '"') {
          expr = Piece{expr.text.substr(1, expr.text.size() - 2), expr.offset + 1};
        }
        try {
          step.predicate = parse_predicate(expr.text);
        } catch (const SyntaxError &e) {
          syntax(expr.offset + e.position(), e.what());
        }
        break;
      }
      case OpKind::MAP:
        arity(step, args, 2, 2);
        step.row_var = ident(args[0], "row variable");
        step.literal = integer(args[1], "reckey");
        break;
      case OpKind::IL: {
        arity(step, args, 1, 1);
        auto level = level_from_name(args[0].text);
        if (!level) syntax(args[0].offset, "expected isolation level RU|RC|RR|SR");
        step.level = *level;
        break;
      }
      case OpKind::R:
        arity(step, args, 1, 2);
        row_and_columns(step, args[0]);
        if (step.column_spec.size() > 1) syntax(args[0].offset, "read takes at most one column");
        if (args.size() == 2) step.value_var = ident(args[1], "value variable");
        break;
      case OpKind::W:
        arity(step, args, 1, 2);
        row_and_columns(step, args[0]);
        if (std::find(step.column_spec.begin(), step.column_spec.end(), Column::RECKEY) != step.column_spec.end()) {
          throw SemanticError("write cannot change reckey");
        }
        if (!step.column_spec.empty()) {
          if (args.size() != 2) syntax(step.position, "column list needs a value list");
          value_list(step, args[1]);
        } else if (args.size() == 2) {
          if (auto v = to_int(args[1].text)) {
            step.literal = *v;
          } else {
            step.value_var = ident(args[1], "value or value variable");
          }
        }
        break;
      case OpKind::RW:
        arity(step, args, 1, 2);
        step.row_var = ident(args[0], "row variable");
        if (args.size() == 2) step.value_var = ident(args[1], "value variable");
        break;
      case OpKind::I:
        arity(step, args, 1, 2);
        row_and_columns(step, args[0]);
        if (!step.column_spec.empty() || args.size() == 2) {
          if (args.size() != 2) syntax(step.position, "column list needs a value list");
          value_list(step, args[1]);
        }
        break;
      case OpKind::D:
        arity(step, args, 1, 1);
        step.row_var = ident(args[0], "row variable");
        break;
      case OpKind::PR: {
        arity(step, args, 1, 2);
        auto parts = split_top(args[0], ';');
        if (parts.size() < 3 || parts.size() > 4) syntax(args[0].offset, "expected P;column;limit[;row]");
        step.pred_var = pred_ref(parts[0]);
        if (parts[1].text == "count(*)") {
          step.aggregate = true;
        } else {
          step.column_spec.push_back(column(parts[1]));
        }
        std::string limit(parts[2].text);
        std::transform(limit.begin(), limit.end(), limit.begin(), [](unsigned char c) { return std::tolower(c); });
        if (limit == "all") {
          step.row_limit = RowLimit::everything();
        } else {
          auto n = integer(parts[2], "row limit or 'all'");
          if (n < 1) syntax(parts[2].offset, "row limit must be positive");
          step.row_limit = RowLimit::rows(n);
        }
        if (parts.size() == 4) step.row_var = ident(parts[3], "row variable");
        if (args.size() == 2) step.value_var = ident(args[1], "value variable");
        break;
      }
      case OpKind::SU:
        arity(step, args, 1, 2);
        step.pred_var = pred_ref(args[0]);
        if (args.size() == 2) step.literal = integer(args[1], "integer delta");
        break;
      case OpKind::SS: {
        arity(step, args, 2, 2);
        step.pred_var = pred_ref(args[0]);
        std::string agg(args[1].text);
        std::transform(agg.begin(), agg.end(), agg.begin(), [](unsigned char c) { return std::tolower(c); });
        agg.erase(std::remove_if(agg.begin(), agg.end(), [](unsigned char c) { return std::isspace(c); }), agg.end());
        if (agg == "count(*)") {
          step.aggregate = true;
        } else if (agg.size() > 5 && agg.rfind("sum(", 0) == 0 && agg.back() == ')') {
          step.column_spec.push_back(column(Piece{std::string_view(agg).substr(4, agg.size() - 5), args[1].offset}));
        } else {
          syntax(args[1].offset, "expected sum(column) or count(*)");
        }
        break;
      }
      case OpKind::C:
      case OpKind::A:
        break;
    }
  }

  void validate(HistoryProgram &program) const {
    std::set<TxnId> seen_txn;
    std::set<TxnId> terminated;
    std::set<std::string> row_vars_seen;
    std::set<std::string> preds;
    for (const auto &step : program.steps) {
      if (step.kind == OpKind::IL && seen_txn.count(step.txn) != 0) {
        throw SemanticError("IL" + std::to_string(step.txn) + " must be the first operation of its transaction");
      }
      if (step.kind == OpKind::MAP && row_vars_seen.count(*step.row_var) != 0) {
        throw SemanticError("row variable " + *step.row_var + " is already bound");
      }
      if (step.kind == OpKind::PRED && !preds.insert(*step.pred_var).second) {
        throw SemanticError("predicate variable " + *step.pred_var + " declared twice");
      }
      if (step.row_var) row_vars_seen.insert(*step.row_var);
      if (step.txn != 0) seen_txn.insert(step.txn);
      if (step.kind == OpKind::C || step.kind == OpKind::A) terminated.insert(step.txn);
    }
    program.unterminated = std::any_of(seen_txn.begin(), seen_txn.end(),
                                       [&](TxnId t) { return terminated.count(t) == 0; });
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string row_ref(const std::string &var, const std::map<std::string, Key> *bindings) {
  if (bindings != nullptr) {
    auto it = bindings->find(var);
    if (it != bindings->end()) return var + "=" + std::to_string(it->second);
  }
  return var;
}

template <typename T, typename F>
std::string join(const std::vector<T> &items, F &&fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ';';
    out += fmt(items[i]);
  }
  return out;
}

}  // namespace

HistoryProgram parse_history(std::string_view text, std::string source_name) {
  return HistoryParser(text).parse(std::move(source_name));
}

std::string render_step(const Step &step, const std::map<std::string, Key> *bindings) {
  std::string out(op_name(step.kind));
  if (step.txn != 0) out += std::to_string(step.txn);
  auto columns = [&] {
    std::string s;
    for (Column c : step.column_spec) {
      s += ';';
      s += column_name(c);
    }
    return s;
  };
  auto values = [&] { return join(step.value_spec, [](std::int64_t v) { return std::to_string(v); }); };

  switch (step.kind) {
    case OpKind::PRED:
      out += "(" + *step.pred_var + ", " + render_predicate(*step.predicate) + ")";
      break;
    case OpKind::MAP:
      out += "(" + *step.row_var + ", " + std::to_string(*step.literal) + ")";
      break;
    case OpKind::IL:
      out += "(" + std::string(level_name(*step.level)) + ")";
      break;
    case OpKind::R:
    case OpKind::RW:
    case OpKind::D:
      out += "(" + row_ref(*step.row_var, bindings) + columns();
      if (step.value_var) out += "," + *step.value_var;
      out += ")";
      break;
    case OpKind::W:
    case OpKind::I:
      out += "(" + row_ref(*step.row_var, bindings) + columns();
      if (!step.value_spec.empty() || !step.column_spec.empty()) {
        out += "," + values();
      } else if (step.literal) {
        out += "," + std::to_string(*step.literal);
      } else if (step.value_var) {
        out += "," + *step.value_var;
      }
      out += ")";
      break;
    case OpKind::PR:
      out += "(" + *step.pred_var + ";";
      out += step.aggregate ? std::string("count(*)") : std::string(column_name(step.column_spec.at(0)));
      out += ";";
      out += step.row_limit->all ? std::string("all") : std::to_string(step.row_limit->count);
      if (step.row_var) out += ";" + row_ref(*step.row_var, bindings);
      if (step.value_var) out += "," + *step.value_var;
      out += ")";
      break;
    case OpKind::SU:
      out += "(" + *step.pred_var;
      if (step.literal) out += "," + std::to_string(*step.literal);
      out += ")";
      break;
    case OpKind::SS:
      out += "(" + *step.pred_var + ",";
      out += step.aggregate ? std::string("count(*)") : "sum(" + std::string(column_name(step.column_spec.at(0))) + ")";
      out += ")";
      break;
    case OpKind::C:
    case OpKind::A:
      break;
  }
  return out;
}

std::string render_history(const HistoryProgram &program) {
  std::string out;
  for (const auto &[k, v] : program.metadata) out += "#@ " + k + "=" + v + "\n";
  for (std::size_t i = 0; i < program.steps.size(); ++i) {
    if (i > 0) out += ' ';
    out += render_step(program.steps[i]);
  }
  return out;
}

}  // namespace histex
