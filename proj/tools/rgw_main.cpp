#include "rgw_cli.hpp"

int main(int argc, char** argv) { return rgw::cli::run_cli(argc, argv); }
