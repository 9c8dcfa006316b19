#include "stochsynth/cli.hpp"

int main(int argc, char** argv) { return stochsynth::cli::run(argc, argv); }
