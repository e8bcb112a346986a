#include <iostream>
#include <string>
#include <vector>

#include "absaforge/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return absaforge::cli::run(args, std::cout, std::cerr);
}
