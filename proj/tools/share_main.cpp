#include "share/cli.hpp"

int main(int argc, char** argv) { return share::run_cli(argc, argv); }
