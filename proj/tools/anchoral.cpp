#include "anchoral/cli.hpp"

int main(int argc, char **argv) { return anchoral::run_cli(argc, argv); }
