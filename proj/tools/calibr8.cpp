#include "calibr8/cli.hpp"

int main(int argc, char** argv) { return calibr8::cli::main(argc, argv); }
