#include <iostream>

#include "chainlab/cli.hpp"

int main(int argc, char** argv) { return chainlab::cli_main(argc, argv, std::cout, std::cerr); }
