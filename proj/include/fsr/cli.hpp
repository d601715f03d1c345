#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fsr::cli {

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

/// Runs one command line (without the program name). Results go to `out`, diagnostics to
/// `err`. Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Output extents for `infer --scale s`: floor(n s + 0.5) per axis.
std::size_t scaled_extent(std::size_t n, double s);

/// Process-wide allocator settings for the executables. Tape buffers of 128 KB and up would
/// otherwise get a fresh mmap per op and page-fault on every forward pass.
void configure_process();

/// "HxW" -> (H, W); throws on anything else.
std::pair<std::size_t, std::size_t> parse_extents(const std::string& text);

}  // namespace fsr::cli
