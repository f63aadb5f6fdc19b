#include "tsbc/cli.hpp"

int main(int argc, char** argv) { return tsbc::cli_main(argc, argv); }
