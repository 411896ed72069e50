#include "cagemap/cli.hpp"

int main(int argc, char** argv) { return cagemap::cli::run(argc, argv); }
