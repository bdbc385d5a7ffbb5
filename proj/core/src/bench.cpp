#include "had/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "had/gdn.hpp"

namespace had {

namespace {

struct Instance {
    Tensor x;
    GdnCellParams params;
    Tensor S0;
};

Instance make_instance(int L, int d, std::uint64_t seed) {
    Instance inst;
    Rng rng(derive_seed(seed, "bench", static_cast<std::uint64_t>(L), static_cast<std::uint64_t>(d)));
    std::vector<float> xv(static_cast<std::size_t>(L) * d);
    for (auto& v : xv) v = static_cast<float>(rng.normal(0.0, 1.0));
    inst.x = Tensor::from_data({L, d}, std::move(xv));
    ParamStore<float> store;
    inst.params = GdnCellParams::create(store, "bench", d, d, d, rng);
    inst.S0 = Tensor::zeros({d, d});
    return inst;
}

}  // namespace

std::vector<BenchResult> bench_gdn(const std::vector<int>& Ls, int d,
                                   const std::vector<int>& chunks, int repeats,
                                   std::uint64_t seed) {
    repeats = std::max(repeats, 5);
    std::vector<BenchResult> results;
    for (int L : Ls) {
        Instance inst = make_instance(L, d, seed);
        auto [ref, ref_state] = gdn_forward_sequential(inst.x, inst.params, inst.S0);
        for (int chunk : chunks) {
            const int c = std::min(chunk, L);
            // correctness gate before timing
            auto probe = gdn_forward_chunkwise(inst.x, inst.params, inst.S0, c);
            double max_diff = 0.0;
            for (std::size_t i = 0; i < ref.numel(); ++i) {
                max_diff = std::max(max_diff,
                                    std::abs(static_cast<double>(ref.data()[i]) -
                                             static_cast<double>(probe.outputs.data()[i])));
            }
            if (max_diff > 1e-5) {
                throw HadError("bench_gdn: chunkwise/sequential divergence " +
                               std::to_string(max_diff) + " at L=" + std::to_string(L) +
                               ", chunk=" + std::to_string(c));
            }
            for (int w = 0; w < 2; ++w) {
                gdn_forward_chunkwise(inst.x, inst.params, inst.S0, c);
            }
            std::vector<double> times;
            times.reserve(static_cast<std::size_t>(repeats));
            for (int r = 0; r < repeats; ++r) {
                const auto start = std::chrono::steady_clock::now();
                auto run = gdn_forward_chunkwise(inst.x, inst.params, inst.S0, c);
                const auto stop = std::chrono::steady_clock::now();
                times.push_back(
                    std::chrono::duration<double, std::nano>(stop - start).count());
            }
            std::sort(times.begin(), times.end());
            const double median = times[times.size() / 2];
            BenchResult res;
            res.variant = "gdn_chunkwise";
            res.L = L;
            res.d = d;
            res.chunk = c;
            res.ns_per_token = median / L;
            res.tokens_per_sec = 1e9 * L / median;
            results.push_back(res);
        }
    }
    return results;
}

void write_bench_csv(const std::vector<BenchResult>& results, std::ostream& out) {
    out << "variant,L,d,chunk,ns_per_token,tokens_per_sec\n";
    for (const auto& r : results) {
        out << r.variant << ',' << r.L << ',' << r.d << ',' << r.chunk << ','
            << r.ns_per_token << ',' << r.tokens_per_sec << '\n';
    }
}

}  // namespace had
