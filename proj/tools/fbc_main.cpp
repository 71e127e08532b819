#include "fbc/cli.hpp"

int main(int argc, char** argv) {
    return fbc::run_cli(argc, argv);
}
