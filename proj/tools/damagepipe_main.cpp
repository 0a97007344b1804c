#include "damagepipe/cli.hpp"

int main(int argc, char** argv) { return damagepipe::cli::run_command(argc, argv); }
