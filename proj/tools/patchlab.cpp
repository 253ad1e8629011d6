#include "patchlab/cli.hpp"

int main(int argc, char** argv) { return patchlab::cli::run(argc, argv); }
