#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ldisc::cli {

/// Exit codes shared by every command.
enum ExitCode : int { kOk = 0, kDomainFailure = 1, kUsage = 2, kIoError = 3 };

/// Runs the `ldisc` command line. Data goes to `out` (or to files when an
/// output directory is given by --out or LDISC_OUT_DIR), diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// RFC 4180 field: quoted when it holds a comma, quote, CR or LF.
std::string csv_field(std::string_view s);
std::string csv_line(const std::vector<std::string>& fields);

/// Shortest round-trip formatting (%.17g); "nan", "inf" and "-inf" otherwise.
std::string format_number(double x);

std::string sha256_hex(std::string_view data);

/// "start:stop:count" (inclusive, evenly spaced) or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

/// "a..b" (inclusive) and comma-separated values, mixed freely.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

}  // namespace ldisc::cli
