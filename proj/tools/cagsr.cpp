#include "cagsr/cli/commands.hpp"

int main(int argc, char** argv) { return cagsr::cli::run(argc, argv); }
