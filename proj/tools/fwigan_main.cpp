#include <iostream>

#include "fwigan/cli.hpp"

int main(int argc, char** argv) { return fwigan::run_cli(argc, argv, std::cout, std::cerr); }
