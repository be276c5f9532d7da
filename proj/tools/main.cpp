#include <iostream>

#include "uwe/cli.hpp"

int main(int argc, char** argv) {
  return uwe::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
