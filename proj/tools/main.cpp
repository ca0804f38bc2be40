#include "apo/cli.hpp"

int main(int argc, char** argv) { return apo::cli::run_main(argc, argv); }
