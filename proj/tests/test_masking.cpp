#include <doctest.h>

#include <algorithm>
#include <set>

#include "had/errors.hpp"
#include "had/masking.hpp"

using namespace had;

TEST_CASE("sample_kmer_mask count rule") {
    CHECK(sample_kmer_mask(171, 0.15, 1).size() == 26);  // round(25.65)
    CHECK(sample_kmer_mask(20, 0.15, 1).size() == 3);
    CHECK(sample_kmer_mask(100, 0.0, 1).empty());
    CHECK(sample_kmer_mask(7, 0.001, 1).size() == 1);  // floor of 1 when ratio > 0
    CHECK(sample_kmer_mask(7, 1.0, 1).size() == 7);
}

TEST_CASE("sample_kmer_mask deterministic and sorted") {
    auto a = sample_kmer_mask(171, 0.15, 42);
    auto b = sample_kmer_mask(171, 0.15, 42);
    CHECK(a == b);
    CHECK(std::is_sorted(a.begin(), a.end()));
    auto c = sample_kmer_mask(171, 0.15, 43);
    CHECK(a != c);
}

TEST_CASE("expand_mask_to_char index arithmetic") {
    CHECK(expand_mask_to_char({2}, 6) == std::vector<int>{12, 13, 14, 15, 16, 17});
    CHECK(expand_mask_to_char({}, 6).empty());
    CHECK(expand_mask_to_char({0, 1}, 2) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("build_mask_plan small cases") {
    auto plan = build_mask_plan(12, 6, 0.5, 3);
    CHECK(plan.masked_kmer.size() == 1);
    CHECK(plan.masked_char.size() == 6);
    CHECK(plan.visible_char.size() == 6);

    auto full = build_mask_plan(12, 6, 1.0, 3);
    CHECK(full.visible_char.empty());

    auto big = build_mask_plan(1026, 6, 0.15, 3);
    CHECK(big.masked_kmer.size() == 26);
    CHECK(big.masked_char.size() == 156);
    CHECK(big.visible_char.size() == 870);

    CHECK_THROWS_AS(build_mask_plan(10, 6, 0.5, 3), LengthNotDivisible);
}

TEST_CASE("mask plan invariants over 1000 seeds at L=1026") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        auto plan = build_mask_plan(1026, 6, 0.15, seed);
        REQUIRE(plan.masked_kmer.size() == 26);

        // partition at k-mer level
        std::set<int> units(plan.masked_kmer.begin(), plan.masked_kmer.end());
        for (int u : plan.visible_kmer) {
            CHECK(units.insert(u).second);
        }
        REQUIRE(units.size() == 171);

        // zero leakage: no char of a masked unit is visible
        std::set<int> masked_chars(plan.masked_char.begin(), plan.masked_char.end());
        for (int c : plan.visible_char) CHECK(masked_chars.count(c) == 0);
        CHECK(masked_chars.size() + plan.visible_char.size() == 1026);

        // group-completeness: visible chars form whole k-aligned blocks
        std::set<int> visible(plan.visible_char.begin(), plan.visible_char.end());
        for (int c : plan.visible_char) {
            const int group_start = (c / 6) * 6;
            for (int i = 0; i < 6; ++i) CHECK(visible.count(group_start + i) == 1);
        }
    }
}

TEST_CASE("mask plan determinism") {
    auto a = build_mask_plan(1026, 6, 0.15, 777);
    auto b = build_mask_plan(1026, 6, 0.15, 777);
    CHECK(a.masked_kmer == b.masked_kmer);
    CHECK(a.visible_char == b.visible_char);
}

TEST_CASE("sampling is uniform across units") {
    const int n_units = 20;
    const int n_seeds = 10000;
    std::vector<int> hits(n_units, 0);
    for (int seed = 0; seed < n_seeds; ++seed) {
        for (int u : sample_kmer_mask(n_units, 0.15, static_cast<std::uint64_t>(seed))) {
            hits[static_cast<std::size_t>(u)]++;
        }
    }
    for (int u = 0; u < n_units; ++u) {
        const double freq = static_cast<double>(hits[static_cast<std::size_t>(u)]) / n_seeds;
        CHECK(std::abs(freq - 3.0 / 20.0) <= 0.02);
    }
}

TEST_CASE("mask plan JSON round-trip") {
    auto plan = build_mask_plan(1026, 6, 0.15, 5);
    auto restored = MaskPlan::from_json(plan.to_json());
    CHECK(restored.L == plan.L);
    CHECK(restored.k == plan.k);
    CHECK(restored.masked_kmer == plan.masked_kmer);
    CHECK(restored.visible_char == plan.visible_char);
}
