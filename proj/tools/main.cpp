#include <string>
#include <vector>

#include "cosfuse/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cosfuse::run_cli(args);
}
