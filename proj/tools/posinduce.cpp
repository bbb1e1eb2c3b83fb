#include <iostream>

#include "posinduce/cli.hpp"

int main(int argc, char** argv) { return posinduce::cli::run(argc, argv, std::cout, std::cerr); }
