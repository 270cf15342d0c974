#include <benchmark/benchmark.h>

// the packaged benchmark_main archive is LTO bytecode from another compiler
// release, so the entry point is built here
BENCHMARK_MAIN();
