#ifndef P2_CLI_HPP
#define P2_CLI_HPP

namespace p2 {

// Entry point for the command-line tool. Exit codes: 0 success, 2 config
// error, 3 precondition error, 4 invariant violation.
int run_cli(int argc, const char* const* argv);

}  // namespace p2

#endif
