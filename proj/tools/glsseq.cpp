#include <iostream>

#include "glsseq/cli.hpp"

int main(int argc, char** argv) {
  return glsseq::cli::main_entry(argc, argv, std::cout, std::cerr);
}
