#include "ppm/cli.hpp"

int main(int argc, char** argv) { return ppm::cli::run(argc, argv); }
