#include "dms/cli.hpp"

int main(int argc, char** argv) { return dms::cli::main(argc, argv); }
