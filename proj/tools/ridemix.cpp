#include <iostream>
#include <string>
#include <vector>

#include "ridemix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ridemix::cli::dispatch_command(args, std::cout, std::cerr);
}
