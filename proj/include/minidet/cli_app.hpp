#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace minidet {

// Full CLI entry point, also used in-process by tests. args excludes argv[0].
// Exit codes: 0 success, 1 check/validation failure, 2 usage or parse error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace minidet
