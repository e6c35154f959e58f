#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adr/error.hpp"
#include "adr/events.hpp"

namespace adr {

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t offset, const std::string& reason)
      : Error(ErrorCode::kMalformedLine, "malformed syslog line at byte " + std::to_string(offset) + ": " + reason,
              reason),
        offset_(offset),
        reason_(reason) {}

  std::size_t offset() const { return offset_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

// Parses one command record. Accepted shapes:
//   <PRI>1 2021-12-01T15:00:33.000001Z host app - - [sd k="v"] key="v" ...
//   [<PRI>]Dec 1 2021 15:00:33 username="root" client src="..." cmd="..." ...
//   [<PRI>]Dec  1 15:00:33 ...            (year taken from default_year)
//   [<PRI>]2021-12-01T15:00:33Z key="v" ...
// The first bare word of the payload is the hostname. Throws MalformedLine.
CommandEvent parse_syslog_command(std::string_view line, std::optional<int> default_year = std::nullopt);

// Inverse of the parser for the bare key=value form with an ISO timestamp.
std::string format_syslog_command(const CommandEvent& event);

// Splits a TCP byte stream into syslog messages. Octet-counted frames
// ("LEN SP MSG") and LF-terminated frames may be mixed on one stream.
class SyslogFramer {
 public:
  explicit SyslogFramer(std::size_t max_frame = 64 * 1024) : max_frame_(max_frame) {}

  // Returns every frame completed by `bytes`. Oversized frames are returned
  // truncated to max_frame so they still reach the dead-letter path.
  std::vector<std::string> feed(std::string_view bytes);
  // Remaining partial LF frame at end of stream, if any.
  std::optional<std::string> finish();

 private:
  std::string buffer_;
  std::size_t max_frame_;
};

}  // namespace adr
