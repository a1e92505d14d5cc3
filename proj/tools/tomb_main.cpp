#include "tomb/cli.hpp"

int main(int argc, char** argv) { return tomb::cli::main(argc, argv); }
