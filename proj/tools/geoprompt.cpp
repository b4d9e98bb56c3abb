#include "geoprompt/cli.hpp"

int main(int argc, char** argv) { return geoprompt::cli::run(argc, argv); }
