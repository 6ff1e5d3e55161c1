#include <string>
#include <vector>

#include "conflux/cli.hpp"

int main(int argc, char** argv) {
  return conflux::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
