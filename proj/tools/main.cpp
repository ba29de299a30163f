#include <string>
#include <vector>

#include "wsee/harness.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return wsee::harness::cli(args);
}
