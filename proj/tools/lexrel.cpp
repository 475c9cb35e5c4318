#include "lexrel/cli.hpp"

int main(int argc, char** argv) { return lexrel::cli::run(argc, argv); }
