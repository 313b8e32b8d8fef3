#include "styleswin/cli.hpp"

int main(int argc, char** argv) { return styleswin::cli_main(argc, argv); }
