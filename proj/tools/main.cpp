#include "stlsnn/cli.hpp"

int main(int argc, char** argv) { return stlsnn::cli_main(argc, argv); }
