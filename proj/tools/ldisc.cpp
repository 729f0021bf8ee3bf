#include "ldisc/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ldisc::cli::run(argc, argv, std::cout, std::cerr); }
