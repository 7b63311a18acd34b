#include <iostream>

#include "xclr/cli.hpp"

int main(int argc, char** argv) { return xclr::cli::run(argc, argv, std::cout, std::cerr); }
