#include "commands.hpp"

int main(int argc, char** argv) { return fdiag::cli::run(argc, argv); }
