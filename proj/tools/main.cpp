#include "unlearn/cli.hpp"

int main(int argc, char** argv) { return unlearn::cli::run(argc, argv); }
