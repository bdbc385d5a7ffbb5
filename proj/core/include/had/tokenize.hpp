#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "had/genome.hpp"

namespace had {

// Character vocabulary: A=0 C=1 G=2 T=3 N=4 PAD=5. PAD is never produced by
// encoding raw DNA; it exists for fine-tuning length padding.
struct CharVocab {
    static constexpr int A = 0;
    static constexpr int C = 1;
    static constexpr int G = 2;
    static constexpr int T = 3;
    static constexpr int N = 4;
    static constexpr int PAD = 5;
    static constexpr int size = 6;
};

// Non-overlapping k-mer vocabulary. Pure-ACGT k-mers get big-endian base-4
// ids in [0, 4^k); any k-mer containing N collapses to UNK = 4^k; PAD = 4^k+1.
struct KmerVocab {
    explicit KmerVocab(int k = 6);
    int k;
    std::int64_t unk_id;   // 4^k
    std::int64_t pad_id;   // 4^k + 1
    std::int64_t size;     // 4^k + 2
};

std::vector<int> encode_char(const std::string& seq);
std::string decode_char(const std::vector<int>& ids);

std::vector<std::int64_t> encode_kmer(const std::string& seq, int k);

struct TokenizedSequence {
    std::vector<int> char_ids;           // length L
    std::vector<std::int64_t> kmer_ids;  // length L/k
    Window source;
};

TokenizedSequence tokenize_window(const Window& window, int k);

}  // namespace had
