#include <iostream>

#include "eqr/experiment.hpp"

int main(int argc, char** argv) { return eqr::cli_main(argc, argv, std::cout, std::cerr); }
