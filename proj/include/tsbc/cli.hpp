#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tsbc {

// Subcommands simulate, correct, report and trace. Returns 0 on success,
// 1 on usage or input errors, 2 on numerical failure.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace tsbc
