#include <string>
#include <vector>

#include "har/harness.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return har::cli_main(args);
}
