#include "had/masking.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "had/errors.hpp"
#include "had/rng.hpp"

namespace had {

std::vector<int> sample_kmer_mask(int n_units, double ratio, std::uint64_t rng_seed) {
    if (n_units < 1) throw HadError("n_units must be >= 1");
    if (ratio < 0.0 || ratio > 1.0) throw HadError("mask ratio must be in [0, 1]");
    if (ratio == 0.0) return {};
    int m = static_cast<int>(std::floor(ratio * static_cast<double>(n_units) + 0.5));
    m = std::clamp(m, 1, n_units);
    Rng rng(rng_seed);
    return rng.sample_without_replacement(n_units, m);
}

std::vector<int> expand_mask_to_char(const std::vector<int>& kmer_set, int k) {
    std::vector<int> chars;
    chars.reserve(kmer_set.size() * static_cast<std::size_t>(k));
    for (int j : kmer_set) {
        for (int i = 0; i < k; ++i) chars.push_back(j * k + i);
    }
    return chars;
}

MaskPlan plan_from_masked_units(int L, int k, std::vector<int> masked_kmer) {
    if (k <= 0 || L <= 0) throw HadError("L and k must be positive");
    if (L % k != 0) {
        throw LengthNotDivisible("L=" + std::to_string(L) + " is not divisible by k=" +
                                 std::to_string(k));
    }
    std::sort(masked_kmer.begin(), masked_kmer.end());
    const int n_units = L / k;

    MaskPlan plan;
    plan.L = L;
    plan.k = k;
    plan.masked_kmer = std::move(masked_kmer);
    plan.visible_kmer.reserve(static_cast<std::size_t>(n_units) - plan.masked_kmer.size());
    std::size_t next = 0;
    for (int j = 0; j < n_units; ++j) {
        if (next < plan.masked_kmer.size() && plan.masked_kmer[next] == j) {
            ++next;
        } else {
            plan.visible_kmer.push_back(j);
        }
    }
    if (next != plan.masked_kmer.size()) {
        throw HadError("masked unit index out of range [0, " + std::to_string(n_units) + ")");
    }
    plan.masked_char = expand_mask_to_char(plan.masked_kmer, k);
    plan.visible_char = expand_mask_to_char(plan.visible_kmer, k);
    return plan;
}

MaskPlan build_mask_plan(int L, int k, double ratio, std::uint64_t rng_seed) {
    if (k <= 0 || L <= 0) throw HadError("L and k must be positive");
    if (L % k != 0) {
        throw LengthNotDivisible("L=" + std::to_string(L) + " is not divisible by k=" +
                                 std::to_string(k));
    }
    return plan_from_masked_units(L, k, sample_kmer_mask(L / k, ratio, rng_seed));
}

std::string MaskPlan::to_json() const {
    nlohmann::json j;
    j["L"] = L;
    j["k"] = k;
    j["masked_kmer"] = masked_kmer;
    return j.dump();
}

MaskPlan MaskPlan::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    return plan_from_masked_units(j.at("L").get<int>(), j.at("k").get<int>(),
                                  j.at("masked_kmer").get<std::vector<int>>());
}

}  // namespace had
