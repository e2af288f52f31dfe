#include "cli.hpp"

int main(int argc, char** argv) { return lindyn::cli::run_cli(argc, argv); }
