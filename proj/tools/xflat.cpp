#include "xflat/cli.hpp"

int main(int argc, char** argv) { return xflat::dispatch(argc, argv); }
