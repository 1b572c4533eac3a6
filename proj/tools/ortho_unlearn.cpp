#include <string>
#include <vector>

#include "oul/harness.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return oul::harness::run_cli(args);
}
