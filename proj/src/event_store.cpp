#include "adr/event_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adr/error.hpp"

namespace adr {

std::string_view to_string(EventKind kind) { return kind == EventKind::kCommand ? "command" : "action"; }

Json to_json(const Envelope& e) {
  Json j = {{"seq", e.seq}, {"kind", std::string(to_string(e.kind))}, {"body", e.body}};
  if (e.dedup_key) j["dedup"] = *e.dedup_key;
  return j;
}

Envelope envelope_from_json(const Json& j) {
  Envelope e;
  e.seq = j.at("seq").get<std::uint64_t>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "command") {
    e.kind = EventKind::kCommand;
  } else if (kind == "action") {
    e.kind = EventKind::kAction;
  } else {
    throw Error(ErrorCode::kStorageFailure, "unknown envelope kind '" + kind + "'");
  }
  e.body = j.at("body");
  if (auto it = j.find("dedup"); it != j.end()) e.dedup_key = it->get<std::string>();
  return e;
}

namespace {

int open_append(const std::filesystem::path& p) {
  const int fd = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) {
    throw Error(ErrorCode::kStorageFailure, "cannot open " + p.string() + ": " + std::strerror(errno));
  }
  return fd;
}

bool valid_utf8(const std::string& s) {
  try {
    (void)Json(s).dump();
    return true;
  } catch (const Json::type_error&) {
    return false;
  }
}

std::string to_hex(const std::string& s) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() * 2);
  for (unsigned char c : s) {
    out += kDigits[c >> 4];
    out += kDigits[c & 15];
  }
  return out;
}

std::string from_hex(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    out += static_cast<char>(std::stoi(s.substr(i, 2), nullptr, 16));
  }
  return out;
}

// Raw bytes that are not valid UTF-8 are kept verbatim as hex.
Json dead_letter_json(const DeadLetter& d) {
  Json j = {{"reason", d.reason}, {"offset", d.offset}};
  if (valid_utf8(d.raw)) {
    j["raw"] = d.raw;
  } else {
    j["raw_hex"] = to_hex(d.raw);
  }
  if (!valid_utf8(d.reason)) j["reason"] = Json(d.reason).dump(-1, ' ', false, Json::error_handler_t::replace);
  return j;
}

}  // namespace

EventStore::EventStore() = default;

EventStore::EventStore(std::filesystem::path file, bool sync_each_append)
    : path_(std::move(file)), sync_(sync_each_append) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  dead_letter_path_ = path_;
  dead_letter_path_ += ".deadletter.jsonl";
  recover();
  fd_ = open_append(path_);
  dead_fd_ = open_append(dead_letter_path_);
}

EventStore::~EventStore() {
  if (fd_ >= 0) {
    ::fsync(fd_);
    ::close(fd_);
  }
  if (dead_fd_ >= 0) ::close(dead_fd_);
}

void EventStore::recover() {
  auto read_lines = [](const std::filesystem::path& p, std::size_t& good_bytes, std::size_t& total) {
    std::vector<std::string> lines;
    std::ifstream in(p, std::ios::binary);
    good_bytes = 0;
    total = 0;
    if (!in) return lines;
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    total = data.size();
    std::size_t pos = 0;
    while (pos < data.size()) {
      const std::size_t lf = data.find('\n', pos);
      if (lf == std::string::npos) break;  // torn tail
      lines.push_back(data.substr(pos, lf - pos));
      pos = lf + 1;
      good_bytes = pos;
    }
    return lines;
  };

  std::size_t good = 0, total = 0;
  std::vector<std::string> lines = read_lines(path_, good, total);
  std::uint64_t last = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Envelope e;
    try {
      e = envelope_from_json(Json::parse(lines[i]));
    } catch (const std::exception& ex) {
      if (i + 1 == lines.size() && good == total) {
        // A crash between write and newline cannot produce this, but a
        // partially flushed final line can; drop it like a torn tail.
        good -= lines[i].size() + 1;
        break;
      }
      throw Error(ErrorCode::kStorageFailure,
                  "corrupt record at line " + std::to_string(i + 1) + " of " + path_.string() + ": " + ex.what());
    }
    if (e.seq <= last) {
      throw Error(ErrorCode::kStorageFailure, "sequence numbers not increasing at line " + std::to_string(i + 1));
    }
    last = e.seq;
    if (e.dedup_key) dedup_[*e.dedup_key] = e.seq;
    entries_.push_back(std::move(e));
  }
  if (good < total) {
    truncated_bytes_ = total - good;
    std::filesystem::resize_file(path_, good);
  }

  std::size_t dgood = 0, dtotal = 0;
  for (const auto& line : read_lines(dead_letter_path_, dgood, dtotal)) {
    try {
      const Json j = Json::parse(line);
      dead_.push_back({j.contains("raw_hex") ? from_hex(j["raw_hex"].get<std::string>()) : j.at("raw").get<std::string>(),
                       j.at("reason").get<std::string>(),
                       j.at("offset").get<std::size_t>()});
    } catch (const std::exception&) {
      dead_.push_back({line, "unreadable dead letter", 0});
    }
  }
  if (dgood < dtotal) std::filesystem::resize_file(dead_letter_path_, dgood);
}

void EventStore::write_line(int fd, const std::string& line) {
  const off_t before = ::lseek(fd, 0, SEEK_END);
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      if (before >= 0 && ::ftruncate(fd, before) != 0) {
        // Nothing more to undo; recovery drops the torn tail on next open.
      }
      throw Error(ErrorCode::kStorageFailure, "append failed: " + why);
    }
    written += static_cast<std::size_t>(n);
  }
  if (sync_) ::fdatasync(fd);
}

std::uint64_t EventStore::append(EventKind kind, Json body, std::optional<std::string> dedup_key) {
  std::unique_lock lock(mu_);
  if (dedup_key) {
    if (auto it = dedup_.find(*dedup_key); it != dedup_.end()) return it->second;
  }
  Envelope e;
  e.seq = entries_.empty() ? 1 : entries_.back().seq + 1;
  e.kind = kind;
  e.body = std::move(body);
  e.dedup_key = std::move(dedup_key);
  // Invalid UTF-8 is replaced before the record is kept, so memory and
  // disk always hold the same body.
  const std::string line = to_json(e).dump(-1, ' ', false, Json::error_handler_t::replace);
  if (fd_ >= 0) write_line(fd_, line + "\n");
  e.body = envelope_from_json(Json::parse(line)).body;
  if (e.dedup_key) dedup_[*e.dedup_key] = e.seq;
  entries_.push_back(std::move(e));
  return entries_.back().seq;
}

std::uint64_t EventStore::ingest(const CommandEvent& event, std::optional<std::string> dedup_key) {
  return append(EventKind::kCommand, to_json(event), std::move(dedup_key));
}

std::uint64_t EventStore::ingest(const TrainingActionEvent& event, std::optional<std::string> dedup_key) {
  return append(EventKind::kAction, to_json(event), std::move(dedup_key));
}

void EventStore::dead_letter(DeadLetter letter) {
  std::unique_lock lock(mu_);
  if (dead_fd_ >= 0) write_line(dead_fd_, dead_letter_json(letter).dump() + "\n");
  dead_.push_back(std::move(letter));
}

std::vector<Envelope> EventStore::snapshot(std::optional<std::uint64_t> up_to) const {
  std::shared_lock lock(mu_);
  if (!up_to) return entries_;
  std::vector<Envelope> out;
  for (const auto& e : entries_) {
    if (e.seq > *up_to) break;
    out.push_back(e);
  }
  return out;
}

void EventStore::visit(const std::function<void(const Envelope&)>& fn, std::optional<std::uint64_t> up_to) const {
  std::shared_lock lock(mu_);
  for (const auto& e : entries_) {
    if (up_to && e.seq > *up_to) break;
    fn(e);
  }
}

std::vector<DeadLetter> EventStore::dead_letters() const {
  std::shared_lock lock(mu_);
  return dead_;
}

std::uint64_t EventStore::last_seq() const {
  std::shared_lock lock(mu_);
  return entries_.empty() ? 0 : entries_.back().seq;
}

std::size_t EventStore::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

}  // namespace adr
