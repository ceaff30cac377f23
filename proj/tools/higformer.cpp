#include <string>
#include <vector>

#include "higformer/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return higformer::run_command(args);
}
