#include "fairrec/cli.hpp"

int main(int argc, char** argv) { return fairrec::run_cli(argc, argv); }
