#include <doctest.h>

#include <algorithm>
#include <map>

#include "had/errors.hpp"
#include "had/genome.hpp"

using namespace had;

TEST_CASE("parse_fasta single record") {
    auto records = parse_fasta(">chr1\nACGT\n");
    REQUIRE(records.size() == 1);
    CHECK(records[0].id == "chr1");
    CHECK(records[0].seq == "ACGT");
}

TEST_CASE("parse_fasta concatenates lines and uppercases") {
    auto records = parse_fasta(">a\nacg\nt\n>b\nNNN\n");
    REQUIRE(records.size() == 2);
    CHECK(records[0].id == "a");
    CHECK(records[0].seq == "ACGT");
    CHECK(records[1].id == "b");
    CHECK(records[1].seq == "NNN");
}

TEST_CASE("parse_fasta handles CRLF and missing trailing newline") {
    auto records = parse_fasta(">x\r\nAC\r\nGT");
    REQUIRE(records.size() == 1);
    CHECK(records[0].seq == "ACGT");
}

TEST_CASE("parse_fasta rejects headerless input") {
    CHECK_THROWS_AS(parse_fasta("ACGT\n"), MalformedFasta);
}

TEST_CASE("parse_fasta rejects empty body and illegal bases") {
    CHECK_THROWS_AS(parse_fasta(">a\n>b\nACGT\n"), MalformedFasta);
    CHECK_THROWS_AS(parse_fasta(">a\nACXT\n"), IllegalBase);
}

TEST_CASE("reverse_complement basics") {
    CHECK(reverse_complement("ACGT") == "ACGT");
    CHECK(reverse_complement("AAA") == "TTT");
    CHECK(reverse_complement("ACGN") == "NCGT");
    CHECK_THROWS_AS(reverse_complement("ACQT"), IllegalBase);
}

TEST_CASE("reverse_complement is an involution") {
    Rng rng(123);
    const char* bases = "ACGTN";
    for (int trial = 0; trial < 50; ++trial) {
        std::string s;
        const int len = 1 + static_cast<int>(rng.below(200));
        for (int i = 0; i < len; ++i) s.push_back(bases[rng.below(5)]);
        CHECK(reverse_complement(reverse_complement(s)) == s);
    }
}

TEST_CASE("window_sequence tiling and drop-short rule") {
    SequenceRecord rec{"r", std::string(2052, 'A')};
    auto w = window_sequence(rec, 1026, 1026);
    REQUIRE(w.size() == 2);
    CHECK(w[0].offset == 0);
    CHECK(w[1].offset == 1026);

    SequenceRecord small{"s", std::string(1000, 'A')};
    CHECK(window_sequence(small, 1026, 1026).empty());

    SequenceRecord nearly{"n", std::string(1027, 'A')};
    CHECK(window_sequence(nearly, 1026, 1026).size() == 1);
}

TEST_CASE("windows are verbatim substrings at their stated offsets") {
    Rng rng(7);
    std::string seq;
    const char* bases = "ACGT";
    for (int i = 0; i < 500; ++i) seq.push_back(bases[rng.below(4)]);
    SequenceRecord rec{"r", seq};
    for (const auto& w : window_sequence(rec, 60, 37)) {
        CHECK(w.seq == seq.substr(static_cast<std::size_t>(w.offset), 60));
    }
}

TEST_CASE("split_dataset rounding, determinism, partition") {
    std::vector<Window> windows;
    for (int i = 0; i < 10; ++i) windows.push_back(Window{"r", i, "ACGT"});

    auto [train, val] = split_dataset(windows, 0.2, 99);
    CHECK(train.size() == 8);
    CHECK(val.size() == 2);

    auto [train0, val0] = split_dataset(windows, 0.0, 99);
    CHECK(train0.size() == 10);
    CHECK(val0.empty());

    auto [train2, val2] = split_dataset(windows, 0.2, 99);
    for (std::size_t i = 0; i < train.size(); ++i) CHECK(train[i].offset == train2[i].offset);
    for (std::size_t i = 0; i < val.size(); ++i) CHECK(val[i].offset == val2[i].offset);

    // disjoint and exhaustive as multisets (offsets are unique here)
    std::map<std::int64_t, int> counts;
    for (const auto& w : train) counts[w.offset]++;
    for (const auto& w : val) counts[w.offset]++;
    CHECK(counts.size() == 10);
    for (const auto& [off, n] : counts) CHECK(n == 1);
}
