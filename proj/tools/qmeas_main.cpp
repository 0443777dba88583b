#include "qmeas/cli.hpp"

int main(int argc, char** argv) { return qmeas::run_cli(argc, argv); }
