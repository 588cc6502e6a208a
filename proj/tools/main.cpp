#include "stepscore/pipeline/cli.hpp"

int main(int argc, char** argv) { return stepscore::pipeline::run(argc, argv); }
