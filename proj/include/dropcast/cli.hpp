#pragma once

#include <string>
#include <vector>

namespace dropcast::cli {

// Exit codes: 0 ok, 1 runtime failure, 2 usage error.
int run(int argc, const char* const* argv);
// args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace dropcast::cli
