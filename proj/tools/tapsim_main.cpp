// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return tapsim::cli::execute(argc, argv, std::cout, std::cerr); }
