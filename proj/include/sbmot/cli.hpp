#pragma once

#include <string>
#include <vector>

namespace sbm::cli {

/// Exit codes: 0 success, 2 invalid input, 3 infeasible / convex-order
/// failure, 4 non-convergence, 5 verification failure.
int run(const std::vector<std::string>& args);

int main(int argc, char** argv);

}  // namespace sbm::cli
