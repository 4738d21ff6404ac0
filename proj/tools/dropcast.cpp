#include "dropcast/cli.hpp"

int main(int argc, char** argv) { return dropcast::cli::run(argc, argv); }
