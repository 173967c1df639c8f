#include "cli.hpp"

int main(int argc, char** argv) { return metapath::cli::run(argc, argv); }
