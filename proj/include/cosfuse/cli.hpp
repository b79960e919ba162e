#pragma once

#include <string>
#include <vector>

namespace cosfuse {

// Entry point behind the `cosfuse` binary; args exclude the program name.
// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
// 4 numeric failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace cosfuse
