#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace adr::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;  // validation or operational error
inline constexpr int kUsage = 2;   // missing file, parse error, bad usage

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adr::cli
