#include "histex/protocol.h"

#include <charconv>
#include <sstream>

#include "histex/errors.h"

namespace histex {

namespace {

struct KindName {
  WorkerRequest::Kind kind;
  std::string_view name;
};

constexpr KindName kRequestNames[] = {
    {WorkerRequest::Kind::BEGIN, "BEGIN"},         {WorkerRequest::Kind::READ, "READ"},
    {WorkerRequest::Kind::WRITE, "WRITE"},         {WorkerRequest::Kind::RW, "RW"},
    {WorkerRequest::Kind::INSERT, "INSERT"},       {WorkerRequest::Kind::DELETE, "DELETE"},
    {WorkerRequest::Kind::PR, "PR"},               {WorkerRequest::Kind::SETUPDATE, "SETUPDATE"},
    {WorkerRequest::Kind::SETSELECT, "SETSELECT"}, {WorkerRequest::Kind::COMMIT, "COMMIT"},
    {WorkerRequest::Kind::ROLLBACK, "ROLLBACK"},   {WorkerRequest::Kind::FINALIZE, "FINALIZE"},
};

std::string_view strip_frame(std::string_view frame) {
  if (frame.empty() || frame.back() != '\n') throw ProtocolError("frame is not newline-terminated");
  frame.remove_suffix(1);
  if (frame.find('\n') != std::string_view::npos) throw ProtocolError("frame contains an embedded newline");
  return frame;
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

// Splits off the first space-separated word.
std::string_view next_word(std::string_view &rest) {
  while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  auto end = rest.find(' ');
  auto word = rest.substr(0, end);
  rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end + 1);
  return word;
}

std::int64_t to_int(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ProtocolError("expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

Column to_column(std::string_view text) {
  auto c = column_from_name(text);
  if (!c) throw ProtocolError("unknown column '" + std::string(text) + "'");
  return *c;
}

std::string encode_values(const std::vector<std::pair<Column, std::int64_t>> &values) {
  std::string out;
  for (const auto &[c, v] : values) {
    if (!out.empty()) out += ',';
    out += std::string(column_name(c)) + "=" + std::to_string(v);
  }
  return out;
}

std::vector<std::pair<Column, std::int64_t>> decode_values(std::string_view text) {
  std::vector<std::pair<Column, std::int64_t>> out;
  for (auto item : split(text, ',')) {
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ProtocolError("expected col=value, got '" + std::string(item) + "'");
    out.emplace_back(to_column(item.substr(0, eq)), to_int(item.substr(eq + 1)));
  }
  return out;
}

std::string_view response_tag(WorkerResponse::Kind kind) {
  switch (kind) {
    case WorkerResponse::Kind::SUCCESS:
      return "SUCCESS";
    case WorkerResponse::Kind::FAILURE:
      return "FAILURE";
    case WorkerResponse::Kind::WAITING:
      return "WAITING";
    case WorkerResponse::Kind::RESUMING:
      return "RESUMING";
  }
  return "";
}

}  // namespace

void Notifier::notify() {
  {
    std::lock_guard lk(mu_);
    ++generation_;
  }
  cv_.notify_all();
}

std::uint64_t Notifier::generation() const {
  std::lock_guard lk(mu_);
  return generation_;
}

bool Notifier::wait_for_change(std::uint64_t seen, Clock::time_point deadline) const {
  std::unique_lock lk(mu_);
  return cv_.wait_until(lk, deadline, [&] { return generation_ != seen; });
}

void Channel::send(std::string frame) {
  strip_frame(frame);
  {
    std::lock_guard lk(mu_);
    frames_.push_back(std::move(frame));
  }
  cv_.notify_all();
  if (notifier_) notifier_->notify();
}

std::string Channel::receive() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] { return !frames_.empty(); });
  auto f = std::move(frames_.front());
  frames_.pop_front();
  return f;
}

std::optional<std::string> Channel::receive_until(Clock::time_point deadline) {
  std::unique_lock lk(mu_);
  if (!cv_.wait_until(lk, deadline, [&] { return !frames_.empty(); })) return std::nullopt;
  auto f = std::move(frames_.front());
  frames_.pop_front();
  return f;
}

std::optional<std::string> Channel::try_receive() {
  std::lock_guard lk(mu_);
  if (frames_.empty()) return std::nullopt;
  auto f = std::move(frames_.front());
  frames_.pop_front();
  return f;
}

bool WorkerRequest::operator==(const WorkerRequest &o) const {
  return kind == o.kind && level == o.level && key == o.key && column == o.column && values == o.values &&
         cursor_id == o.cursor_id && fetch.column == o.fetch.column && fetch.aggregate == o.fetch.aggregate &&
         fetch.limit == o.fetch.limit && aggregate == o.aggregate && delta == o.delta && predicate == o.predicate;
}

std::string encode_row(const std::optional<Row> &row) {
  if (!row) return "-";
  std::string out;
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (i) out += '|';
    out += std::to_string(row->values[i]);
  }
  return out;
}

std::optional<Row> decode_row(std::string_view text) {
  if (text == "-") return std::nullopt;
  auto parts = split(text, '|');
  if (parts.size() != kColumnCount) throw ProtocolError("row image needs " + std::to_string(kColumnCount) + " values");
  Row row;
  for (std::size_t i = 0; i < kColumnCount; ++i) row.values[i] = to_int(parts[i]);
  return row;
}

std::string encode_request(const WorkerRequest &r) {
  std::string out;
  for (const auto &kn : kRequestNames) {
    if (kn.kind == r.kind) out = std::string(kn.name);
  }
  switch (r.kind) {
    case WorkerRequest::Kind::BEGIN:
      out += " " + std::string(level_name(r.level));
      break;
    case WorkerRequest::Kind::READ:
      out += " " + std::to_string(r.key) + " " + std::string(column_name(r.column));
      break;
    case WorkerRequest::Kind::WRITE:
      out += " " + std::to_string(r.key) + " " + (r.values.empty() ? std::string("DEFAULT") : encode_values(r.values));
      break;
    case WorkerRequest::Kind::INSERT:
      out += " " + std::to_string(r.key);
      if (!r.values.empty()) out += " " + encode_values(r.values);
      break;
    case WorkerRequest::Kind::RW:
    case WorkerRequest::Kind::DELETE:
      out += " " + std::to_string(r.key);
      break;
    case WorkerRequest::Kind::PR:
      out += " " + std::to_string(r.cursor_id) + " " +
             (r.fetch.aggregate ? std::string("count(*)") : std::string(column_name(r.fetch.column.value_or(Column::RECKEY)))) +
             " " + (r.fetch.limit.all ? std::string("all") : std::to_string(r.fetch.limit.count)) + " " +
             render_predicate(*r.predicate);
      break;
    case WorkerRequest::Kind::SETUPDATE:
      out += " " + std::to_string(r.delta) + " " + render_predicate(*r.predicate);
      break;
    case WorkerRequest::Kind::SETSELECT:
      out += " " + (r.aggregate == Aggregate::COUNT ? std::string("count") : "sum:" + std::string(column_name(r.column))) +
             " " + render_predicate(*r.predicate);
      break;
    case WorkerRequest::Kind::COMMIT:
    case WorkerRequest::Kind::ROLLBACK:
    case WorkerRequest::Kind::FINALIZE:
      break;
  }
  return out + "\n";
}

WorkerRequest decode_request(std::string_view frame) {
  std::string_view rest = strip_frame(frame);
  const auto verb = next_word(rest);
  WorkerRequest r;
  bool known = false;
  for (const auto &kn : kRequestNames) {
    if (kn.name == verb) {
      r.kind = kn.kind;
      known = true;
    }
  }
  if (!known) throw ProtocolError("unknown request '" + std::string(verb) + "'");

  auto predicate = [&](std::string_view text) {
    if (text.empty()) throw ProtocolError("missing predicate");
    try {
      return parse_predicate(text);
    } catch (const std::exception &e) {
      throw ProtocolError(std::string("bad predicate: ") + e.what());
    }
  };

  switch (r.kind) {
    case WorkerRequest::Kind::BEGIN: {
      auto lvl = level_from_name(next_word(rest));
      if (!lvl) throw ProtocolError("unknown isolation level");
      r.level = *lvl;
      break;
    }
    case WorkerRequest::Kind::READ:
      r.key = to_int(next_word(rest));
      r.column = to_column(next_word(rest));
      break;
    case WorkerRequest::Kind::WRITE: {
      r.key = to_int(next_word(rest));
      auto vals = next_word(rest);
      if (vals != "DEFAULT") r.values = decode_values(vals);
      break;
    }
    case WorkerRequest::Kind::INSERT: {
      r.key = to_int(next_word(rest));
      auto vals = next_word(rest);
      if (!vals.empty()) r.values = decode_values(vals);
      break;
    }
    case WorkerRequest::Kind::RW:
    case WorkerRequest::Kind::DELETE:
      r.key = to_int(next_word(rest));
      break;
    case WorkerRequest::Kind::PR: {
      r.cursor_id = static_cast<int>(to_int(next_word(rest)));
      auto col = next_word(rest);
      if (col == "count(*)") {
        r.fetch.aggregate = true;
      } else {
        r.fetch.column = to_column(col);
      }
      auto limit = next_word(rest);
      r.fetch.limit = limit == "all" ? RowLimit::everything() : RowLimit::rows(to_int(limit));
      r.predicate = predicate(rest);
      break;
    }
    case WorkerRequest::Kind::SETUPDATE:
      r.delta = to_int(next_word(rest));
      r.predicate = predicate(rest);
      break;
    case WorkerRequest::Kind::SETSELECT: {
      auto agg = next_word(rest);
      if (agg == "count") {
        r.aggregate = Aggregate::COUNT;
      } else if (agg.substr(0, 4) == "sum:") {
        r.aggregate = Aggregate::SUM;
        r.column = to_column(agg.substr(4));
      } else {
        throw ProtocolError("unknown aggregate '" + std::string(agg) + "'");
      }
      r.predicate = predicate(rest);
      break;
    }
    case WorkerRequest::Kind::COMMIT:
    case WorkerRequest::Kind::ROLLBACK:
    case WorkerRequest::Kind::FINALIZE:
      break;
  }
  if (r.kind != WorkerRequest::Kind::PR && r.kind != WorkerRequest::Kind::SETUPDATE &&
      r.kind != WorkerRequest::Kind::SETSELECT && !rest.empty()) {
    throw ProtocolError("trailing text in frame: '" + std::string(rest) + "'");
  }
  return r;
}

std::string encode_response(const WorkerResponse &r) {
  std::string out(response_tag(r.kind));
  if (r.kind == WorkerResponse::Kind::FAILURE) out += " " + std::string(status_name(r.status));
  for (auto v : r.values) out += " " + std::to_string(v);
  for (const auto &row : r.rows) {
    out += " ROW=" + std::to_string(row.key);
    if (row.value) out += ":" + std::to_string(*row.value);
  }
  if (r.key) out += " KEY=" + std::to_string(*r.key);
  if (r.cursor_id != 0) out += " CURSOR=" + std::to_string(r.cursor_id);
  for (const auto &img : r.images) {
    out += " IMAGE=" + std::to_string(img.seq) + "/" + std::to_string(img.key) + "/" + encode_row(img.before) + "/" +
           encode_row(img.after);
  }
  return out + "\n";
}

WorkerResponse decode_response(std::string_view frame) {
  std::string_view rest = strip_frame(frame);
  const auto tag = next_word(rest);
  WorkerResponse r;
  if (tag == "SUCCESS") {
    r.kind = WorkerResponse::Kind::SUCCESS;
  } else if (tag == "FAILURE") {
    r.kind = WorkerResponse::Kind::FAILURE;
    auto code = next_word(rest);
    auto status = status_from_name(code);
    if (!status) throw ProtocolError("unknown failure code '" + std::string(code) + "'");
    r.status = *status;
  } else if (tag == "WAITING") {
    r.kind = WorkerResponse::Kind::WAITING;
  } else if (tag == "RESUMING") {
    r.kind = WorkerResponse::Kind::RESUMING;
  } else {
    throw ProtocolError("unknown response '" + std::string(tag) + "'");
  }
  while (!rest.empty()) {
    auto word = next_word(rest);
    if (word.empty()) continue;
    if (word.substr(0, 4) == "ROW=") {
      auto body = word.substr(4);
      auto colon = body.find(':');
      FetchedRow fr{to_int(body.substr(0, colon)), std::nullopt};
      if (colon != std::string_view::npos) fr.value = to_int(body.substr(colon + 1));
      r.rows.push_back(fr);
    } else if (word.substr(0, 4) == "KEY=") {
      r.key = to_int(word.substr(4));
    } else if (word.substr(0, 7) == "CURSOR=") {
      r.cursor_id = static_cast<int>(to_int(word.substr(7)));
    } else if (word.substr(0, 6) == "IMAGE=") {
      auto parts = split(word.substr(6), '/');
      if (parts.size() != 4) throw ProtocolError("malformed IMAGE field");
      WriteImage img;
      img.seq = static_cast<std::uint64_t>(to_int(parts[0]));
      img.key = to_int(parts[1]);
      img.before = decode_row(parts[2]);
      img.after = decode_row(parts[3]);
      r.images.push_back(std::move(img));
    } else {
      r.values.push_back(to_int(word));
    }
  }
  return r;
}

WorkerResponse to_response(const OpResult &result) {
  WorkerResponse r;
  r.kind = result.ok() ? WorkerResponse::Kind::SUCCESS : WorkerResponse::Kind::FAILURE;
  r.status = result.status;
  if (result.ok()) {
    r.values = result.values;
    r.rows = result.rows;
    r.images = result.images;
    r.key = result.key;
    r.cursor_id = result.cursor_id;
  }
  return r;
}

std::string handle_frame(Engine &engine, TxnId txn, std::string_view frame, const WaitHooks &hooks) {
  const WorkerRequest req = decode_request(frame);
  OpResult result;
  switch (req.kind) {
    case WorkerRequest::Kind::BEGIN:
      result.status = engine.begin(txn, req.level);
      break;
    case WorkerRequest::Kind::READ:
      result = engine.read_item(txn, req.key, req.column, hooks);
      break;
    case WorkerRequest::Kind::WRITE:
      result = engine.write_item(txn, req.key, req.values, hooks);
      break;
    case WorkerRequest::Kind::RW:
      result = engine.rw_item(txn, req.key, hooks);
      break;
    case WorkerRequest::Kind::INSERT:
      result = engine.insert_item(txn, req.key == 0 ? std::nullopt : std::optional<Key>(req.key), req.values, hooks);
      break;
    case WorkerRequest::Kind::DELETE:
      result = engine.delete_item(txn, req.key, hooks);
      break;
    case WorkerRequest::Kind::PR:
      result = engine.predicate_read(txn, req.cursor_id, *req.predicate, req.fetch, hooks);
      break;
    case WorkerRequest::Kind::SETUPDATE:
      result = engine.set_update(txn, *req.predicate, req.delta, hooks);
      break;
    case WorkerRequest::Kind::SETSELECT:
      result = engine.set_select(txn, *req.predicate, req.aggregate, req.column, hooks);
      break;
    case WorkerRequest::Kind::COMMIT:
      result = engine.commit(txn);
      break;
    case WorkerRequest::Kind::ROLLBACK:
      result = engine.rollback(txn);
      break;
    case WorkerRequest::Kind::FINALIZE: {
      auto st = engine.status(txn);
      if (st && (*st == TxnStatus::ACTIVE || *st == TxnStatus::BLOCKED)) engine.rollback(txn);
      break;
    }
  }
  return encode_response(to_response(result));
}

}  // namespace histex
