#include "kgan/cli.hpp"

int main(int argc, char** argv) { return kgan::cli::main(argc, argv); }
