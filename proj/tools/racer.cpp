#include "racer/cli.hpp"

int main(int argc, char** argv) { return racer::cli::cli_main(argc, argv); }
