#include "fexgan/cli.hpp"

int main(int argc, char** argv) { return fexgan::run_cli(argc, argv); }
