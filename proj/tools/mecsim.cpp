#include "mecsim/cli.hpp"

int main(int argc, char** argv) { return mecsim::cli::run(argc, argv); }
