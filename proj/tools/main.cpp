#include "cli.hpp"

int main(int argc, char** argv) { return deepsd::cli::run(argc, argv); }
