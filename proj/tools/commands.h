#ifndef FUNQUE_TOOLS_COMMANDS_H_
#define FUNQUE_TOOLS_COMMANDS_H_

#include <iosfwd>

namespace funque::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

// Parses argv (argv[0] is the program name), runs one subcommand and writes
// reports to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace funque::cli

#endif  // FUNQUE_TOOLS_COMMANDS_H_
