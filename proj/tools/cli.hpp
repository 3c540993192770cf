#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "n3l/grid.hpp"

namespace n3l::cli {

// sysexits-style process status codes.
enum Exit : int {
    ok = 0,
    invalid = 1,         // verify found a violation
    budget_limited = 2,  // solve stopped before proving optimality
    usage = 64,
    data = 65,
    no_input = 66,
    software = 70,
    io = 74,
};

// Runs one command line (args exclude the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string render_ascii(const GridConfig& config, bool show_violations);
std::string render_svg(const GridConfig& config, bool show_violations);

}  // namespace n3l::cli
