#include <string>
#include <vector>

#include "eosmute/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return eosmute::cli::run(args);
}
