#pragma once

namespace decept::cli {

// Entry point of the command-line tool; returns the process exit code:
// 0 success, 1 validation or acceptance failure, 2 usage or I/O error.
int cli_main(int argc, const char* const* argv);

}  // namespace decept::cli
