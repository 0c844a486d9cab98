#include <iostream>

#include "nbqf/commands.hpp"

int main(int argc, char** argv) { return nbqf::run_cli(argc, argv, std::cout, std::cerr); }
