#pragma once

#include <string>
#include <vector>

namespace ppd::cli {

// Full command-line entry point; returns the process exit code. Structured
// errors print to stderr and yield a nonzero status. Exposed as a library
// function so integration tests can drive whole pipelines in-process.
int run(const std::vector<std::string>& args);

}  // namespace ppd::cli
