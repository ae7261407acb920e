#include "flowatlas/cli.hpp"

int main(int argc, char** argv) { return flowatlas::cli::run(argc, argv); }
