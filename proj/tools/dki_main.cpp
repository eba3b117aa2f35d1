#include <iostream>

#include "dki/cli.hpp"

int main(int argc, char** argv)
{
    return dki::cli::run(argc, argv, std::cout, std::cerr);
}
