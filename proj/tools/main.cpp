#include <iostream>

#include "cnce/cli.hpp"

int main(int argc, char** argv) {
  return cnce::run_cli(argc, argv, std::cout, std::cerr);
}
