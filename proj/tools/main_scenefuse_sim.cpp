#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.empty()) args.emplace_back();
  args[0] = "scenefuse-sim";
  return scenefuse::cli::run(args, std::cout, std::cerr);
}
