#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace racer::cli {

/// Runs one subcommand. Returns 0 on success, 1 on runtime failure (missing files included),
/// 2 on usage errors with usage text on `err`.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace racer::cli
