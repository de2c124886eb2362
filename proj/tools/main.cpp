#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return oeflow::cli::run_cli(argc, argv, std::cerr, std::cerr); }
