#include "hyplan/harness.hpp"

int main(int argc, char** argv) { return hyplan::cli_main(argc, argv); }
