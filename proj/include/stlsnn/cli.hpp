#pragma once

namespace stlsnn {

// Entry point of the command-line tool. Parses argv, dispatches to one of
// the subcommands (train, eval, gradcheck, encode, noise, shuffle-thresholds,
// jdf-eval, track-thresholds) and returns the process exit status. Errors
// print a message to stderr and return nonzero without leaving partial
// output files behind.
int cli_main(int argc, const char* const* argv);

}  // namespace stlsnn
