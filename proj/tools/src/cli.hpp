#pragma once

#include <iosfwd>

namespace cpga::cli {

// Exit codes: 0 ok, 2 config or parse error, 3 precondition violation,
// 4 numeric failure, 1 anything else.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace cpga::cli
