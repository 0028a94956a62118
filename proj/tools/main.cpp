#include <string>
#include <vector>

#include "cavstab/cli.hpp"

int main(int argc, char** argv) {
  return cavstab::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
