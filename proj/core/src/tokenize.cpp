#include "had/tokenize.hpp"

#include "had/errors.hpp"

namespace had {

namespace {

int char_code(char c, std::size_t position) {
    switch (c) {
        case 'A': return CharVocab::A;
        case 'C': return CharVocab::C;
        case 'G': return CharVocab::G;
        case 'T': return CharVocab::T;
        case 'N': return CharVocab::N;
        default: throw IllegalBase(c, position);
    }
}

}  // namespace

KmerVocab::KmerVocab(int k_) : k(k_) {
    std::int64_t n = 1;
    for (int i = 0; i < k; ++i) n *= 4;
    unk_id = n;
    pad_id = n + 1;
    size = n + 2;
}

std::vector<int> encode_char(const std::string& seq) {
    std::vector<int> ids;
    ids.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) ids.push_back(char_code(seq[i], i));
    return ids;
}

std::string decode_char(const std::vector<int>& ids) {
    static constexpr char alphabet[5] = {'A', 'C', 'G', 'T', 'N'};
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id > 4) {
            throw InvalidTokenId("token id " + std::to_string(id) + " does not decode to a base");
        }
        out.push_back(alphabet[id]);
    }
    return out;
}

std::vector<std::int64_t> encode_kmer(const std::string& seq, int k) {
    if (k <= 0) throw HadError("k must be positive");
    if (seq.size() % static_cast<std::size_t>(k) != 0) {
        throw LengthNotDivisible("sequence length " + std::to_string(seq.size()) +
                                 " is not divisible by k=" + std::to_string(k));
    }
    const KmerVocab vocab(k);
    std::vector<std::int64_t> ids;
    ids.reserve(seq.size() / static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < seq.size(); j += static_cast<std::size_t>(k)) {
        std::int64_t id = 0;
        bool has_n = false;
        for (int i = 0; i < k; ++i) {
            int code = char_code(seq[j + static_cast<std::size_t>(i)], j + static_cast<std::size_t>(i));
            if (code == CharVocab::N) {
                has_n = true;
                break;
            }
            id = id * 4 + code;  // big-endian positional weighting
        }
        ids.push_back(has_n ? vocab.unk_id : id);
    }
    return ids;
}

TokenizedSequence tokenize_window(const Window& window, int k) {
    TokenizedSequence t;
    t.char_ids = encode_char(window.seq);
    t.kmer_ids = encode_kmer(window.seq, k);
    t.source = window;
    return t;
}

}  // namespace had
