#include "p2/cli.hpp"

int main(int argc, char** argv) { return p2::run_cli(argc, argv); }
