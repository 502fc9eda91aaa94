#include <iostream>

#include "jam/app/commands.hpp"

int main(int argc, char** argv) {
  return jam::app::run_cli(argc, argv, std::cout, std::cerr);
}
