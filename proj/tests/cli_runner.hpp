#pragma once
// Runs the command-line tool in a shell and captures its exit code and
// output streams. LSEL_CLI_PATH is injected by the build.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "support.hpp"

namespace lsel::testing {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

inline CliRun lsel_run(const std::string& args) {
  TempDir io("cli_io");
  const std::string cmd = std::string(LSEL_CLI_PATH) + " " + args + " >" + (io / "out").string() + " 2>" +
                          (io / "err").string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(io / "out");
  r.err = slurp(io / "err");
  return r;
}

// Single-quoted for the shell.
inline std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace lsel::testing
