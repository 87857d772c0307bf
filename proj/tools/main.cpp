#include "sympflow/commands.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return sympflow::run_cli(argc, argv, std::cout, std::cerr);
}
