#include "cli.hpp"

int main(int argc, char** argv) { return qepol::cli::main(argc, argv); }
