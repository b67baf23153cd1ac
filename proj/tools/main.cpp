#include <iostream>

#include "knight/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return knight::cli::run(args, std::cout, std::cerr);
}
