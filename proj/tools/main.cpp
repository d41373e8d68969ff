#include "ellobst/cli.hpp"

int main(int argc, char** argv) { return ellobst::cli::main(argc, argv); }
