#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace had {

// Two-stage group mask: units are sampled at k-mer granularity, then expanded
// to character positions, so teacher and student mask boundaries coincide and
// no character of a masked unit ever leaks into the visible set.
struct MaskPlan {
    int L = 0;
    int k = 0;
    std::vector<int> masked_kmer;   // sorted, subset of [0, L/k)
    std::vector<int> visible_kmer;  // sorted complement
    std::vector<int> masked_char;   // sorted, = {j*k+i : j in masked_kmer}
    std::vector<int> visible_char;  // sorted complement

    std::string to_json() const;                  // {L, k, masked_kmer:[...]}
    static MaskPlan from_json(const std::string& text);
};

// |result| = round-half-up(ratio * n_units), clamped to >= 1 whenever
// ratio > 0; uniform without replacement; deterministic under seed.
std::vector<int> sample_kmer_mask(int n_units, double ratio, std::uint64_t rng_seed);

std::vector<int> expand_mask_to_char(const std::vector<int>& kmer_set, int k);

MaskPlan build_mask_plan(int L, int k, double ratio, std::uint64_t rng_seed);

// Rebuilds the derived fields from (L, k, masked_kmer).
MaskPlan plan_from_masked_units(int L, int k, std::vector<int> masked_kmer);

}  // namespace had
