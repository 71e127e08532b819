#pragma once

namespace fbc {

// Entry point shared by the binary and the CLI tests. Returns the process
// exit code: 0 success, 1 verification failure, 2 usage/config error,
// 3 runtime numeric failure.
int run_cli(int argc, const char* const* argv);

} // namespace fbc
