#pragma once

#include <string>
#include <vector>

namespace metapath::cli {

/// Runs the `mpgnn` command line. Returns the process exit code:
/// 0 success, 2 usage or configuration error, 1 runtime failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace metapath::cli
