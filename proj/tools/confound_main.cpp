#include <iostream>

#include "confound/cli.hpp"

int main(int argc, char** argv) { return confound::cli::run(argc, argv, std::cout, std::cerr); }
