// SPDX-License-Identifier: Apache-2.0
#include "cda/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cda::run_cli(args);
}
