#include "segline/cli.hpp"

int main(int argc, char** argv) {
    return segline::cli::run(argc, argv);
}
