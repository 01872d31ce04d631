#pragma once

namespace topicdpr {

// Full pipeline dispatch. Exit codes: 0 success (including --help), 1 usage
// error, 2 data/validation error, 3 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace topicdpr
