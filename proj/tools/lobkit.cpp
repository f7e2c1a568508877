#include "lobkit/cli.hpp"

int main(int argc, char **argv) { return lobkit::cli::run(argc, argv); }
