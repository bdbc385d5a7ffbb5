#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace had {

struct BenchResult {
    std::string variant;
    int L = 0;
    int d = 0;
    int chunk = 0;
    double ns_per_token = 0.0;
    double tokens_per_sec = 0.0;
};

// Times the chunkwise GDN forward at each (L, chunk) pair on a fixed random
// instance. Every timed configuration is first verified against the
// sequential reference (max |delta| <= 1e-5 in 32-bit); a failed equivalence
// aborts the benchmark. Median of >= 5 repeats after 2 warmup runs.
std::vector<BenchResult> bench_gdn(const std::vector<int>& Ls, int d,
                                   const std::vector<int>& chunks, int repeats,
                                   std::uint64_t seed = 42);

// Header "variant,L,d,chunk,ns_per_token,tokens_per_sec" plus one row per
// result.
void write_bench_csv(const std::vector<BenchResult>& results, std::ostream& out);

}  // namespace had
