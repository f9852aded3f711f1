#include "mhflow/cli.hpp"

int main(int argc, char** argv) { return mhflow::cli::run(argc, argv); }
