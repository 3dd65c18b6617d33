#include "catgen/cli.hpp"

int main(int argc, char** argv) { return catgen::run_cli(argc, argv); }
