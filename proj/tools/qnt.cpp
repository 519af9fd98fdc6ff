#include "qnt/cli.hpp"

int main(int argc, char** argv) { return qnt::cli::run(argc, argv); }
