#include <string>
#include <vector>

#include "posbias/cli.hpp"

int main(int argc, char** argv)
{
    return posbias::cli::run_subcommand(std::vector<std::string>(argv + 1, argv + argc));
}
