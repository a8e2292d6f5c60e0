#include <iostream>
#include <string>
#include <vector>

#include "lesionbench/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lesionbench::run_cli(args, std::cout, std::cerr);
}
