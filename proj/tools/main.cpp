#include "commands.hpp"

int main(int argc, char** argv) { return robustft::cli::run(argc, argv); }
