#include "fpflow/cli.hpp"

int main(int argc, char** argv) { return fpflow::cli::run(argc, argv); }
