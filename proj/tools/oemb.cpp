#include "oemb_cli.hpp"

int main(int argc, char** argv) { return oemb::cli::dispatch(argc, argv); }
