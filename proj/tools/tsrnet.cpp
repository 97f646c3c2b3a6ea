#include "tsrnet/cli.hpp"

int main(int argc, char** argv) { return tsrnet::cli::run(argc, argv); }
