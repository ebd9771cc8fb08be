#include <iostream>

#include "topoprior/cli.hpp"

int main(int argc, char** argv) {
  return topoprior::run_cli(argc, argv, std::cout, std::cerr);
}
