#include "topicdpr/cli.hpp"

int main(int argc, char** argv) { return topicdpr::run_cli(argc, argv); }
