#include <iostream>

#include "evd/cli.hpp"

int main(int argc, char** argv) { return evd::cli_main(argc, argv, std::cout, std::cerr); }
