#include "boostgp/cli.hpp"

int main(int argc, char** argv) { return boostgp::cli_main(argc, argv); }
