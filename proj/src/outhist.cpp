#include "histex/outhist.h"

#include <cctype>
#include <charconv>

#include "histex/errors.h"
#include "histex/protocol.h"

namespace histex {

namespace {

std::int64_t parse_int(std::string_view text, std::size_t line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError(line, "expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(sep, start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::string_view next_word(std::string_view &rest) {
  while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  auto end = rest.find(' ');
  auto word = rest.substr(0, end);
  rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end + 1);
  return word;
}

std::string status_token(const OutputRecord &r) {
  switch (r.status) {
    case RecordStatus::RESUMED:
      return "RESUMED(" + std::to_string(r.resumes.value_or(0)) + ")";
    case RecordStatus::ERROR:
      return "ERROR(" + r.error + ")";
    default:
      return std::string(record_status_name(r.status));
  }
}

void parse_status(std::string_view token, OutputRecord &r, std::size_t line) {
  auto inner = [&](std::string_view prefix) -> std::optional<std::string_view> {
    if (token.size() > prefix.size() + 2 && token.substr(0, prefix.size()) == prefix &&
        token[prefix.size()] == '(' && token.back() == ')') {
      return token.substr(prefix.size() + 1, token.size() - prefix.size() - 2);
    }
    return std::nullopt;
  };
  if (auto n = inner("RESUMED")) {
    r.status = RecordStatus::RESUMED;
    r.resumes = static_cast<std::uint64_t>(parse_int(*n, line));
    return;
  }
  if (auto code = inner("ERROR")) {
    r.status = RecordStatus::ERROR;
    r.error = std::string(*code);
    return;
  }
  for (auto s : {RecordStatus::OK, RecordStatus::BLOCKED, RecordStatus::ABORTED_DEADLOCK,
                 RecordStatus::READONLY_VIOLATION}) {
    if (token == record_status_name(s)) {
      r.status = s;
      return;
    }
  }
  throw FormatError(line, "unknown status '" + std::string(token) + "'");
}

std::optional<Row> parse_image(std::string_view text, std::size_t line) {
  try {
    return decode_row(text);
  } catch (const std::exception &e) {
    throw FormatError(line, e.what());
  }
}

}  // namespace

std::string_view record_status_name(RecordStatus status) {
  switch (status) {
    case RecordStatus::OK:
      return "OK";
    case RecordStatus::BLOCKED:
      return "BLOCKED";
    case RecordStatus::RESUMED:
      return "RESUMED";
    case RecordStatus::ERROR:
      return "ERROR";
    case RecordStatus::ABORTED_DEADLOCK:
      return "ABORTED_DEADLOCK";
    case RecordStatus::READONLY_VIOLATION:
      return "READONLY_VIOLATION";
  }
  return "";
}

OpTarget describe_op(std::string_view text) {
  OpTarget t;
  std::size_t i = 0;
  while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  const std::string name(text.substr(0, i));
  for (auto k : {OpKind::PRED, OpKind::MAP, OpKind::IL, OpKind::R, OpKind::W, OpKind::RW, OpKind::I, OpKind::D,
                 OpKind::PR, OpKind::SU, OpKind::SS, OpKind::C, OpKind::A}) {
    if (op_name(k) == name) t.kind = k;
  }
  auto open = text.find('(');
  if (open == std::string_view::npos) return t;
  auto body = text.substr(open + 1);
  auto end = body.find_first_of(";,)");
  auto first = body.substr(0, end);
  switch (t.kind) {
    case OpKind::R:
    case OpKind::W:
    case OpKind::RW:
    case OpKind::I:
    case OpKind::D: {
      auto eq = first.find('=');
      t.row_var = std::string(first.substr(0, eq));
      if (eq != std::string_view::npos) {
        Key k = 0;
        auto digits = first.substr(eq + 1);
        if (std::from_chars(digits.data(), digits.data() + digits.size(), k).ec == std::errc{}) t.key = k;
      }
      break;
    }
    case OpKind::PR:
    case OpKind::SU:
    case OpKind::SS:
      if (!first.empty() && first.front() == '%') first.remove_prefix(1);
      t.pred_var = std::string(first);
      break;
    default:
      break;
  }
  return t;
}

std::string serialize(const OutputHistory &h) {
  std::string out = "# history " + h.name + "\n";
  for (const auto &[k, v] : h.config) out += "# config " + k + "=" + v + "\n";
  for (const auto &[k, v] : h.metadata) out += "# meta " + k + "=" + v + "\n";
  for (const auto &[t, l] : h.levels) out += "# level " + std::to_string(t) + " " + std::string(level_name(l)) + "\n";
  for (const auto &[p, e] : h.predicates) out += "# pred " + p + " " + e + "\n";
  for (const auto &r : h.records) {
    out += std::to_string(r.seq) + " " + std::to_string(r.submit_seq) + " " + r.op + " " + status_token(r);
    if (r.resumes && r.status != RecordStatus::RESUMED) out += " RESUMES=" + std::to_string(*r.resumes);
    if (!r.values.empty()) {
      out += " VALUES=";
      for (std::size_t i = 0; i < r.values.size(); ++i) out += (i ? "," : "") + std::to_string(r.values[i]);
    }
    if (!r.rows.empty()) {
      out += " ROWS=";
      for (std::size_t i = 0; i < r.rows.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(r.rows[i].key);
        if (r.rows[i].value) out += ":" + std::to_string(*r.rows[i].value);
      }
    }
    for (const auto &img : r.images) out += " BEFORE=" + encode_row(img.before) + " AFTER=" + encode_row(img.after);
    out += "\n";
  }
  for (const auto &[t, s] : h.final_status) out += "# final " + std::to_string(t) + " " + s + "\n";
  if (h.stuck) out += "# stuck\n";
  return out;
}

OutputHistory parse_output(std::string_view text) {
  OutputHistory h;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::string_view rest = line;
    if (line.front() == '#') {
      rest.remove_prefix(1);
      auto tag = next_word(rest);
      if (tag == "history") {
        h.name = std::string(rest);
      } else if (tag == "config" || tag == "meta") {
        auto eq = rest.find('=');
        if (eq == std::string_view::npos) throw FormatError(line_no, "expected key=value");
        std::string k(rest.substr(0, eq)), v(rest.substr(eq + 1));
        if (tag == "config") {
          h.config.emplace_back(k, v);
        } else {
          h.metadata[k] = v;
        }
      } else if (tag == "level") {
        auto t = static_cast<TxnId>(parse_int(next_word(rest), line_no));
        auto lvl = level_from_name(next_word(rest));
        if (!lvl) throw FormatError(line_no, "unknown isolation level");
        h.levels[t] = *lvl;
      } else if (tag == "pred") {
        auto var = next_word(rest);
        h.predicates[std::string(var)] = std::string(rest);
      } else if (tag == "final") {
        auto t = static_cast<TxnId>(parse_int(next_word(rest), line_no));
        h.final_status[t] = std::string(next_word(rest));
      } else if (tag == "stuck") {
        h.stuck = true;
      }
      continue;
    }

    OutputRecord r;
    r.seq = static_cast<std::uint64_t>(parse_int(next_word(rest), line_no));
    r.submit_seq = static_cast<std::uint64_t>(parse_int(next_word(rest), line_no));
    r.op = std::string(next_word(rest));
    if (r.op.empty()) throw FormatError(line_no, "missing operation");
    std::size_t digits = 0;
    for (char c : r.op) {
      if (std::isdigit(static_cast<unsigned char>(c))) {
        r.txn = r.txn * 10 + (c - '0');
        ++digits;
      } else if (digits > 0 || c == '(') {
        break;
      }
    }
    auto status = next_word(rest);
    if (status.empty()) throw FormatError(line_no, "missing status");
    parse_status(status, r, line_no);
    std::optional<std::optional<Row>> pending_before;
    while (!rest.empty()) {
      auto field = next_word(rest);
      if (field.empty()) continue;
      auto eq = field.find('=');
      if (eq == std::string_view::npos) throw FormatError(line_no, "unexpected token '" + std::string(field) + "'");
      auto key = field.substr(0, eq);
      auto value = field.substr(eq + 1);
      if (key == "RESUMES") {
        r.resumes = static_cast<std::uint64_t>(parse_int(value, line_no));
      } else if (key == "VALUES") {
        for (auto v : split(value, ',')) r.values.push_back(parse_int(v, line_no));
      } else if (key == "ROWS") {
        for (auto item : split(value, ',')) {
          auto colon = item.find(':');
          FetchedRow fr{parse_int(item.substr(0, colon), line_no), std::nullopt};
          if (colon != std::string_view::npos) fr.value = parse_int(item.substr(colon + 1), line_no);
          r.rows.push_back(fr);
        }
      } else if (key == "BEFORE") {
        if (pending_before) throw FormatError(line_no, "BEFORE without AFTER");
        pending_before = parse_image(value, line_no);
      } else if (key == "AFTER") {
        if (!pending_before) throw FormatError(line_no, "AFTER without BEFORE");
        r.images.push_back(OutputImage{*pending_before, parse_image(value, line_no)});
        pending_before.reset();
      } else {
        throw FormatError(line_no, "unknown field '" + std::string(key) + "'");
      }
    }
    if (pending_before) throw FormatError(line_no, "BEFORE without AFTER");
    h.records.push_back(std::move(r));
  }
  return h;
}

}  // namespace histex
