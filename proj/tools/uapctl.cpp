#include "uap/cli.hpp"

int main(int argc, char** argv) { return uap::cli::run(argc, argv); }
