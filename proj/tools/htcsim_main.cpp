#include <iostream>

#include "htcsim/cli.hpp"

int main(int argc, char** argv) { return htcsim::run_cli(argc, argv, std::cout, std::cerr); }
