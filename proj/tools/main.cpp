// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "occaug/cli.hpp"

int main(int argc, char** argv) {
  return occaug::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
