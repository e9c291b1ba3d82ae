#include "cli.hpp"

int main(int argc, char** argv) { return pprs::cli::run(argc, argv); }
