#include "decept/cli.hpp"

int main(int argc, char** argv) { return decept::cli::cli_main(argc, argv); }
