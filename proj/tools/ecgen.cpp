#include <string>
#include <vector>

#include "ecgen/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ecgen::cli::run_cli(args);
}
