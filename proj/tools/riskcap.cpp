#include <iostream>

#include "riskcap/cli.hpp"

int main(int argc, char** argv) { return riskcap::cli::run(argc, argv, std::cout, std::cerr); }
