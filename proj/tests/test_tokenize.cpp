#include <doctest.h>

#include <string>

#include "had/errors.hpp"
#include "had/rng.hpp"
#include "had/tokenize.hpp"

using namespace had;

TEST_CASE("encode_char stated vocabulary") {
    CHECK(encode_char("ACGT") == std::vector<int>{0, 1, 2, 3});
    CHECK(encode_char("NN") == std::vector<int>{4, 4});
    CHECK(encode_char("").empty());
    CHECK_THROWS_AS(encode_char("ACXT"), IllegalBase);
}

TEST_CASE("decode_char inverse and PAD rejection") {
    CHECK(decode_char({0, 1, 2, 3}) == "ACGT");
    CHECK(decode_char({4}) == "N");
    CHECK_THROWS_AS(decode_char({5}), InvalidTokenId);
    CHECK_THROWS_AS(decode_char({-1}), InvalidTokenId);
}

TEST_CASE("decode_char(encode_char(s)) == s") {
    Rng rng(11);
    const char* bases = "ACGTN";
    for (int trial = 0; trial < 40; ++trial) {
        std::string s;
        const int len = static_cast<int>(rng.below(300));
        for (int i = 0; i < len; ++i) s.push_back(bases[rng.below(5)]);
        CHECK(decode_char(encode_char(s)) == s);
    }
}

TEST_CASE("encode_kmer big-endian rule and UNK") {
    CHECK(encode_kmer("AAAAAA", 6) == std::vector<std::int64_t>{0});
    CHECK(encode_kmer("AAAAAC", 6) == std::vector<std::int64_t>{1});
    CHECK(encode_kmer("TTTTTT", 6) == std::vector<std::int64_t>{4095});
    CHECK(encode_kmer("AAANAA", 6) == std::vector<std::int64_t>{4096});
    CHECK_THROWS_AS(encode_kmer("ACGTA", 2), LengthNotDivisible);
}

namespace {

std::string decode_kmer_id(std::int64_t id, int k) {
    std::string s(static_cast<std::size_t>(k), 'A');
    static constexpr char alphabet[4] = {'A', 'C', 'G', 'T'};
    for (int i = k - 1; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = alphabet[id % 4];
        id /= 4;
    }
    return s;
}

}  // namespace

TEST_CASE("encode_kmer bijective over pure-ACGT k-mers, exhaustive k<=3") {
    for (int k = 1; k <= 3; ++k) {
        std::int64_t n = 1;
        for (int i = 0; i < k; ++i) n *= 4;
        for (std::int64_t id = 0; id < n; ++id) {
            const std::string s = decode_kmer_id(id, k);
            auto ids = encode_kmer(s, k);
            REQUIRE(ids.size() == 1);
            CHECK(ids[0] == id);
        }
    }
}

TEST_CASE("encode_kmer randomized round-trip at k=6") {
    Rng rng(17);
    const char* bases = "ACGT";
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        for (int i = 0; i < 6; ++i) s.push_back(bases[rng.below(4)]);
        auto ids = encode_kmer(s, 6);
        REQUIRE(ids.size() == 1);
        CHECK(decode_kmer_id(ids[0], 6) == s);
    }
}

TEST_CASE("tokenize_window aligns char and kmer granularities") {
    Window w{"r", 0, "ACGTACAAAAAC"};
    auto t = tokenize_window(w, 6);
    CHECK(t.char_ids.size() == 12);
    CHECK(t.kmer_ids.size() == 2);
    // second k-mer "AAAAAC" -> 1
    CHECK(t.kmer_ids[1] == 1);
    CHECK(t.source.seq == w.seq);
}
