#include <iostream>

#include "icon/cli.hpp"

int main(int argc, char** argv) { return icon::cli::dispatch(argc, argv); }
