#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace carbonedge::cli {

// Exit codes: 0 ok, 1 usage or configuration, 2 data, 3 rejected apps or an
// empty result, 4 internal failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace carbonedge::cli
