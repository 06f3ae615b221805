#pragma once

#include <string>
#include <vector>

namespace signspot {

// Entry point shared by the signspot binary and the tests.
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numeric failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace signspot
