#include "flowdiag/cli.hpp"

int main(int argc, char** argv) {
    return flowdiag::cli::run(std::vector<std::string>(argv, argv + argc));
}
