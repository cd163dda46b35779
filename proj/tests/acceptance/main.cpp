#include <iostream>

#include "criteria.hpp"

int main() {
  scenefuse::acceptance::Options opts;
  opts.progress = &std::cerr;
  const auto outcomes = scenefuse::acceptance::run_all(opts);
  int failed = 0;
  for (const auto& o : outcomes) {
    std::cout << scenefuse::acceptance::format(o) << '\n';
    failed += o.pass ? 0 : 1;
  }
  std::cout << (outcomes.size() - failed) << '/' << outcomes.size() << " acceptance criteria passed\n";
  return failed == 0 ? 0 : 1;
}
