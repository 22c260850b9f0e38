#include "adjd/cli.hpp"

int main(int argc, char** argv) { return adjd::cli_main(argc, argv); }
