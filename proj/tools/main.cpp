#include <iostream>

#include "fulc/cli.hpp"

int main(int argc, char** argv) { return fulc::run_cli(argc, argv, std::cout, std::cerr); }
