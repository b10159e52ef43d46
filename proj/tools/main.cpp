#include "blockcov/cli.hpp"

int main(int argc, char** argv) { return blockcov::run_cli(argc, argv); }
