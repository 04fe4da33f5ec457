#include "kbr/cli.hpp"

int main(int argc, char** argv) { return kbr::cli::main_entry(argc, argv); }
