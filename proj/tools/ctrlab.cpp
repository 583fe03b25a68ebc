#include <iostream>

#include "ctrlab/app.hpp"

int main(int argc, char** argv) {
  return ctrlab::cli_main(argc, argv, std::cout, std::cerr);
}
