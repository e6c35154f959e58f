#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "adr/events.hpp"

namespace adr {

enum class EventKind { kCommand, kAction };

std::string_view to_string(EventKind kind);

struct Envelope {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kCommand;
  Json body;
  std::optional<std::string> dedup_key;

  bool operator==(const Envelope&) const = default;
};

Json to_json(const Envelope& e);
Envelope envelope_from_json(const Json& j);

// A record the intake could not parse. Kept, never dropped.
struct DeadLetter {
  std::string raw;
  std::string reason;
  std::size_t offset = 0;

  bool operator==(const DeadLetter&) const = default;
};

// Append-only event log. One JSONL line per envelope, written with a single
// write(2) so readers and crash recovery never see half a record. A torn
// tail left by a crash is truncated on open.
class EventStore {
 public:
  // Memory only.
  EventStore();
  // Opens (creating if needed) and replays `file`. Dead letters go to
  // `file` with a ".deadletter.jsonl" suffix.
  explicit EventStore(std::filesystem::path file, bool sync_each_append = false);
  ~EventStore();

  EventStore(const EventStore&) = delete;
  EventStore& operator=(const EventStore&) = delete;

  // Appends and returns the sequence number. With a dedup key that was seen
  // before, nothing is written and the earlier sequence number is returned.
  std::uint64_t append(EventKind kind, Json body, std::optional<std::string> dedup_key = std::nullopt);
  std::uint64_t ingest(const CommandEvent& event, std::optional<std::string> dedup_key = std::nullopt);
  std::uint64_t ingest(const TrainingActionEvent& event, std::optional<std::string> dedup_key = std::nullopt);

  void dead_letter(DeadLetter letter);

  // Consistent prefix of the log; `up_to` bounds the sequence number.
  std::vector<Envelope> snapshot(std::optional<std::uint64_t> up_to = std::nullopt) const;
  // Visits envelopes in order under a shared lock.
  void visit(const std::function<void(const Envelope&)>& fn, std::optional<std::uint64_t> up_to = std::nullopt) const;

  std::vector<DeadLetter> dead_letters() const;
  std::uint64_t last_seq() const;
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }
  bool persistent() const { return fd_ >= 0; }
  // Bytes of a torn final record discarded during recovery.
  std::size_t truncated_bytes() const { return truncated_bytes_; }

 private:
  void recover();
  void write_line(int fd, const std::string& line);

  std::filesystem::path path_;
  std::filesystem::path dead_letter_path_;
  int fd_ = -1;
  int dead_fd_ = -1;
  bool sync_ = false;
  std::size_t truncated_bytes_ = 0;

  mutable std::shared_mutex mu_;
  std::vector<Envelope> entries_;
  std::map<std::string, std::uint64_t> dedup_;
  std::vector<DeadLetter> dead_;
};

}  // namespace adr
