#include "fmr/commands.hpp"

int main(int argc, char** argv) { return fmr::run_cli(argc, argv); }
