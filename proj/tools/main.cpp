#include "scqa/cli.hpp"

int main(int argc, char** argv) { return scqa::cli::run(argc, argv); }
