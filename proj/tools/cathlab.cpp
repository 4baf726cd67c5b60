#include "cathlab/service/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return cathlab::service::run_cli(argc, argv, std::cout, std::cerr); }
