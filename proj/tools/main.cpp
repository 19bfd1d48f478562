#include "ngdlab/cli.hpp"

int main(int argc, char** argv) { return ngd::cli_main(argc, argv); }
