#include "cli.hpp"

int main(int argc, char** argv) { return carbonedge::cli::main(argc, argv); }
