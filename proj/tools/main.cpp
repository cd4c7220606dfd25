#include "csmlgcn/cli.hpp"

int main(int argc, char** argv) { return csmlgcn::cli::run(argc, argv); }
