#include "ydlc/cli.hpp"

int main(int argc, char** argv) { return ydlc::run_cli(argc, argv); }
