#include <iostream>
#include <string>
#include <vector>

#include "styleforge/cli/cli.hpp"

int main(int argc, char** argv) {
  return styleforge::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
