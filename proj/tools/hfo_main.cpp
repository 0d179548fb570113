// SPDX-License-Identifier: Apache-2.0

#include "hfo/cli.hpp"

int main(int argc, char** argv) { return hfo::cli_main(argc, argv); }
