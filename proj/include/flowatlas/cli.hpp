#pragma once

#include <string>
#include <vector>

namespace flowatlas::cli {

// Full command-line front end. Returns the process exit code:
// 0 success, 1 computation failure (diagnostics file written), 2 usage or
// configuration error.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace flowatlas::cli
