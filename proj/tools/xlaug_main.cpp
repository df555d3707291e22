#include <iostream>
#include <string>
#include <vector>

#include "xlaug/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return xlaug::cli::run_cli(std::move(args), std::cout, std::cerr);
}
