#include "hhmm/cli.hpp"

int main(int argc, char **argv) { return hhmm::run_cli(argc, argv); }
