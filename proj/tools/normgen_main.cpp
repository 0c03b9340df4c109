#include "normgen/cli.hpp"

int main(int argc, char** argv) { return normgen::run_cli({argv, argv + argc}); }
