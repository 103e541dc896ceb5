#include <iostream>

#include "piculet/cli.hpp"

int main(int argc, char** argv) { return piculet::cli::run(argc, argv, std::cout, std::cerr); }
