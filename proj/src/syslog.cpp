#include "adr/syslog.hpp"

#include <array>
#include <cctype>
#include <charconv>

namespace adr {
namespace {

using namespace std::chrono;

constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  bool done() const { return pos_ >= s_.size(); }
  std::size_t pos() const { return pos_; }
  char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }
  void advance(std::size_t n = 1) { pos_ = std::min(s_.size(), pos_ + n); }
  std::string_view rest() const { return s_.substr(std::min(pos_, s_.size())); }

  void skip_spaces() {
    while (!done() && (peek() == ' ' || peek() == '\t')) advance();
  }

  // Token up to the next space.
  std::string_view word() {
    const std::size_t b = pos_;
    while (!done() && peek() != ' ' && peek() != '\t') advance();
    return s_.substr(b, pos_ - b);
  }

  [[noreturn]] void fail(const std::string& reason) const { throw MalformedLine(pos_, reason); }
  [[noreturn]] void fail_at(std::size_t at, const std::string& reason) const { throw MalformedLine(at, reason); }

  int digits(int count, const char* what) {
    int value = 0;
    for (int i = 0; i < count; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail(std::string("expected digit in ") + what);
      value = value * 10 + (peek() - '0');
      advance();
    }
    return value;
  }

  void expect(char c, const char* what) {
    if (peek() != c) fail(std::string("expected '") + c + "' in " + what);
    advance();
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

TimestampUs make_time(Cursor& c, std::size_t at, int year, int month, int day, int hh, int mm, int ss,
                      std::int64_t micros) {
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) c.fail_at(at, "invalid calendar date");
  if (hh > 23 || mm > 59 || ss > 60) c.fail_at(at, "invalid time of day");
  if (ss == 60) ss = 59;  // leap second folded into the preceding one
  return TimestampUs{sys_days{ymd}.time_since_epoch() + hours{hh} + minutes{mm} + seconds{ss} +
                     microseconds{micros}};
}

// 2021-12-01T15:00:33[.ffffff](Z|+hh:mm|-hh:mm)
TimestampUs parse_iso(Cursor& c) {
  const std::size_t at = c.pos();
  const int year = c.digits(4, "year");
  c.expect('-', "date");
  const int month = c.digits(2, "month");
  c.expect('-', "date");
  const int day = c.digits(2, "day");
  if (c.peek() != 'T' && c.peek() != 't') c.fail("expected 'T' in timestamp");
  c.advance();
  const int hh = c.digits(2, "hour");
  c.expect(':', "time");
  const int mm = c.digits(2, "minute");
  c.expect(':', "time");
  const int ss = c.digits(2, "second");
  std::int64_t micros = 0;
  if (c.peek() == '.') {
    c.advance();
    int n = 0;
    while (std::isdigit(static_cast<unsigned char>(c.peek()))) {
      if (n < 6) micros = micros * 10 + (c.peek() - '0');
      ++n;
      c.advance();
    }
    if (n == 0) c.fail("empty fractional seconds");
    for (int i = n; i < 6; ++i) micros *= 10;
  }
  TimestampUs t = make_time(c, at, year, month, day, hh, mm, ss, micros);
  if (c.peek() == 'Z' || c.peek() == 'z') {
    c.advance();
  } else if (c.peek() == '+' || c.peek() == '-') {
    const int sign = c.peek() == '+' ? 1 : -1;
    c.advance();
    const int oh = c.digits(2, "offset");
    c.expect(':', "offset");
    const int om = c.digits(2, "offset");
    if (oh > 23 || om > 59) c.fail("invalid UTC offset");
    t -= sign * (hours{oh} + minutes{om});
  } else {
    c.fail("missing UTC offset");
  }
  return t;
}

int month_index(std::string_view name) {
  for (std::size_t i = 0; i < kMonths.size(); ++i) {
    if (name == kMonths[i]) return static_cast<int>(i) + 1;
  }
  return 0;
}

// "Dec 1 2021 15:00:33" or "Dec  1 15:00:33".
TimestampUs parse_bsd(Cursor& c, std::optional<int> default_year) {
  const std::size_t at = c.pos();
  const int month = month_index(c.word());
  if (month == 0) c.fail_at(at, "unrecognised timestamp");
  c.skip_spaces();
  int day = 0;
  {
    const std::size_t dpos = c.pos();
    std::string_view d = c.word();
    if (d.empty() || d.size() > 2) c.fail_at(dpos, "invalid day of month");
    for (char ch : d) {
      if (!std::isdigit(static_cast<unsigned char>(ch))) c.fail_at(dpos, "invalid day of month");
      day = day * 10 + (ch - '0');
    }
  }
  c.skip_spaces();
  int year = 0;
  auto is_digit = [&](std::size_t i) { return std::isdigit(static_cast<unsigned char>(c.peek(i))) != 0; };
  if (is_digit(0) && is_digit(1) && is_digit(2) && is_digit(3) && c.peek(4) == ' ') {
    year = c.digits(4, "year");
    c.skip_spaces();
  } else if (default_year) {
    year = *default_year;
  } else {
    year = static_cast<int>(year_month_day{floor<days>(system_clock::now())}.year());
  }
  const int hh = c.digits(2, "hour");
  c.expect(':', "time");
  const int mm = c.digits(2, "minute");
  c.expect(':', "time");
  const int ss = c.digits(2, "second");
  std::int64_t micros = 0;
  if (c.peek() == '.') {
    c.advance();
    int n = 0;
    while (std::isdigit(static_cast<unsigned char>(c.peek()))) {
      if (n < 6) micros = micros * 10 + (c.peek() - '0');
      ++n;
      c.advance();
    }
    for (int i = n; i < 6; ++i) micros *= 10;
  }
  return make_time(c, at, year, month, day, hh, mm, ss, micros);
}

// Quoted value after the opening quote; understands \" \\ \] escapes and
// keeps any other backslash literally.
std::string quoted(Cursor& c) {
  const std::size_t open = c.pos();
  std::string out;
  while (true) {
    if (c.done()) c.fail_at(open, "unterminated quoted value");
    const char ch = c.peek();
    if (ch == '\\') {
      const char next = c.peek(1);
      if (next == '"' || next == '\\' || next == ']') {
        out.push_back(next);
        c.advance(2);
        continue;
      }
      out.push_back(ch);
      c.advance();
      continue;
    }
    if (ch == '"') {
      c.advance();
      return out;
    }
    out.push_back(ch);
    c.advance();
  }
}

bool is_key_char(char ch) {
  return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
}

struct Fields {
  std::map<std::string, std::string> kv;
  std::vector<std::string> words;
};

void parse_payload(Cursor& c, Fields& f) {
  while (true) {
    c.skip_spaces();
    if (c.done()) return;
    const std::size_t start = c.pos();
    std::size_t k = 0;
    while (is_key_char(c.peek(k))) ++k;
    if (k > 0 && c.peek(k) == '=') {
      std::string key(c.rest().substr(0, k));
      c.advance(k + 1);
      std::string value;
      if (c.peek() == '"') {
        c.advance();
        value = quoted(c);
        if (!c.done() && c.peek() != ' ' && c.peek() != '\t') c.fail("expected space after quoted value");
      } else {
        value = std::string(c.word());
      }
      f.kv[key] = std::move(value);
      continue;
    }
    std::string_view w = c.word();
    if (w.find('"') != std::string_view::npos) c.fail_at(start, "stray quote");
    f.words.emplace_back(w);
  }
}

// [id k="v" ...][id2 ...]
void parse_structured_data(Cursor& c, Fields& f) {
  if (c.peek() == '-') {
    c.advance();
    return;
  }
  if (c.peek() != '[') c.fail("expected structured data");
  while (c.peek() == '[') {
    c.advance();
    const std::size_t id_start = c.pos();
    while (!c.done() && c.peek() != ' ' && c.peek() != ']') c.advance();
    if (c.pos() == id_start) c.fail("empty SD-ID");
    while (true) {
      if (c.peek() == ']') {
        c.advance();
        break;
      }
      if (c.peek() != ' ') c.fail("malformed SD-PARAM");
      c.advance();
      std::size_t k = 0;
      while (is_key_char(c.peek(k))) ++k;
      if (k == 0 || c.peek(k) != '=' || c.peek(k + 1) != '"') c.fail("malformed SD-PARAM");
      std::string key(c.rest().substr(0, k));
      c.advance(k + 2);
      f.kv[key] = quoted(c);
    }
  }
}

CommandEvent build(const Fields& f, TimestampUs ts, std::string header_host, std::size_t end_offset) {
  CommandEvent e;
  e.timestamp = ts;
  e.hostname = std::move(header_host);
  std::size_t word_index = 0;
  if (e.hostname.empty() && !f.words.empty()) e.hostname = f.words[word_index++];
  for (const auto& [key, value] : f.kv) {
    if (key == "username") {
      e.username = value;
    } else if (key == "hostname") {
      e.hostname = value;
    } else if (key == "src" || key == "src_ip") {
      e.src_ip = value;
    } else if (key == "cmd") {
      e.cmd = value;
    } else if (key == "cmd_type") {
      e.cmd_type = value;
    } else if (key == "uid" || key == "sandbox_uid") {
      std::int64_t uid = -1;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), uid);
      if (ec != std::errc() || p != value.data() + value.size() || uid < 0) {
        throw MalformedLine(end_offset, "sandbox uid must be a non-negative integer");
      }
      e.sandbox_uid = uid;
    } else if (key == "wd") {
      e.wd = value;
    } else {
      e.extra[key] = value;
    }
  }
  if (word_index < f.words.size()) {
    std::string text;
    for (std::size_t i = word_index; i < f.words.size(); ++i) {
      if (!text.empty()) text.push_back(' ');
      text += f.words[i];
    }
    e.extra["_text"] = text;
  }
  if (!f.kv.count("uid") && !f.kv.count("sandbox_uid")) throw MalformedLine(end_offset, "missing uid");
  if (e.cmd.empty()) throw MalformedLine(end_offset, "missing or empty cmd");
  return e;
}

std::string escape(std::string_view v) {
  std::string out;
  out.reserve(v.size() + 2);
  for (char ch : v) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out;
}

std::string iso_micros(TimestampUs t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto tod = t - day;
  const auto h = duration_cast<hours>(tod);
  const auto m = duration_cast<minutes>(tod - h);
  const auto s = duration_cast<seconds>(tod - h - m);
  const auto us = (tod - h - m - s).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%06lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                static_cast<int>(m.count()), static_cast<int>(s.count()), static_cast<long long>(us));
  return buf;
}

}  // namespace

CommandEvent parse_syslog_command(std::string_view line, std::optional<int> default_year) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  Cursor c(line);
  c.skip_spaces();
  if (c.done()) c.fail("empty line");

  if (c.peek() == '<') {
    c.advance();
    int digits = 0;
    while (std::isdigit(static_cast<unsigned char>(c.peek())) && digits < 3) {
      c.advance();
      ++digits;
    }
    if (digits == 0 || c.peek() != '>') c.fail("malformed PRI");
    c.advance();
  }

  Fields fields;
  // RFC 5424: VERSION SP TIMESTAMP SP HOSTNAME SP APP-NAME SP PROCID SP MSGID SP SD [SP MSG]
  if (std::isdigit(static_cast<unsigned char>(c.peek())) && c.peek(1) == ' ') {
    c.advance(2);
    if (c.peek() == '-') c.fail("missing timestamp");
    const TimestampUs ts = parse_iso(c);
    c.expect(' ', "header");
    std::string host(c.word());
    if (host == "-") host.clear();
    c.expect(' ', "header");
    c.word();  // APP-NAME
    c.expect(' ', "header");
    c.word();  // PROCID
    c.expect(' ', "header");
    c.word();  // MSGID
    c.expect(' ', "header");
    parse_structured_data(c, fields);
    if (!c.done()) {
      c.expect(' ', "message");
      if (c.rest().substr(0, 3) == "\xEF\xBB\xBF") c.advance(3);
      parse_payload(c, fields);
    }
    return build(fields, ts, std::move(host), line.size());
  }

  TimestampUs ts;
  if (std::isdigit(static_cast<unsigned char>(c.peek()))) {
    ts = parse_iso(c);
  } else {
    ts = parse_bsd(c, default_year);
  }
  if (!c.done() && c.peek() != ' ' && c.peek() != '\t') c.fail("expected space after timestamp");
  parse_payload(c, fields);
  return build(fields, ts, {}, line.size());
}

std::string format_syslog_command(const CommandEvent& e) {
  std::string out = iso_micros(e.timestamp);
  auto field = [&](std::string_view key, std::string_view value) {
    out.push_back(' ');
    out.append(key);
    out.append("=\"");
    out.append(escape(value));
    out.push_back('"');
  };
  field("username", e.username);
  field("hostname", e.hostname);
  field("src", e.src_ip);
  field("cmd", e.cmd);
  field("cmd_type", e.cmd_type);
  field("uid", std::to_string(e.sandbox_uid));
  field("wd", e.wd);
  for (const auto& [k, v] : e.extra) {
    if (k == "_text") continue;
    field(k, v);
  }
  return out;
}

std::vector<std::string> SyslogFramer::feed(std::string_view bytes) {
  buffer_.append(bytes);
  std::vector<std::string> frames;
  std::size_t pos = 0;
  while (pos < buffer_.size()) {
    // Octet counting: digits then a space.
    std::size_t d = pos;
    while (d < buffer_.size() && d - pos < 10 && std::isdigit(static_cast<unsigned char>(buffer_[d]))) ++d;
    if (d > pos && buffer_[pos] != '0') {
      if (d == buffer_.size()) break;  // length still arriving
      if (buffer_[d] == ' ') {
        std::size_t len = 0;
        std::from_chars(buffer_.data() + pos, buffer_.data() + d, len);
        if (len <= max_frame_) {
          if (buffer_.size() - (d + 1) < len) break;
          frames.push_back(buffer_.substr(d + 1, len));
          pos = d + 1 + len;
          continue;
        }
      }
    }
    const std::size_t lf = buffer_.find('\n', pos);
    if (lf == std::string::npos) {
      if (buffer_.size() - pos > max_frame_) {
        frames.push_back(buffer_.substr(pos, max_frame_));
        pos = buffer_.size();
      }
      break;
    }
    std::string frame = buffer_.substr(pos, lf - pos);
    if (!frame.empty() && frame.back() == '\r') frame.pop_back();
    if (frame.size() > max_frame_) frame.resize(max_frame_);
    if (!frame.empty()) frames.push_back(std::move(frame));
    pos = lf + 1;
  }
  buffer_.erase(0, pos);
  return frames;
}

std::optional<std::string> SyslogFramer::finish() {
  if (buffer_.empty()) return std::nullopt;
  std::string rest = std::move(buffer_);
  buffer_.clear();
  return rest;
}

}  // namespace adr
