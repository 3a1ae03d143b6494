#include "sbmot/cli.hpp"

int main(int argc, char** argv) { return sbm::cli::main(argc, argv); }
