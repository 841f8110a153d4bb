#include "bevrec/cli.hpp"

int main(int argc, char** argv) { return bevrec::cli::run(argc, argv); }
