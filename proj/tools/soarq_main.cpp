#include "soarq/cli.hpp"

int main(int argc, char** argv) { return soarq::run_cli(argc, argv); }
