#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tomb::cli {

// Exit codes: 0 success, 1 engine/provider/storage error (stable code
// printed), 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace tomb::cli
