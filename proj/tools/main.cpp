#include <iostream>

#include "fsr/cli.hpp"

int main(int argc, char** argv) {
  fsr::cli::configure_process();
  return fsr::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
