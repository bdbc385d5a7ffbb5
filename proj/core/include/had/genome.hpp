#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace had {

struct SequenceRecord {
    std::string id;
    std::string seq;  // uppercase, alphabet {A,C,G,T,N}
};

// A fixed-length slice of a source record. seq is a verbatim substring of the
// record at `offset`.
struct Window {
    std::string record_id;
    std::int64_t offset = 0;
    std::string seq;
};

// Parses FASTA text. Lines may be LF or CRLF terminated; lowercase bases are
// uppercased. Throws MalformedFasta / IllegalBase.
std::vector<SequenceRecord> parse_fasta(const std::string& bytes);

std::vector<SequenceRecord> parse_fasta_file(const std::string& path);

// A<->T, C<->G, N<->N, then reverse. Throws IllegalBase.
std::string reverse_complement(const std::string& seq);

// Windows at offsets 0, stride, 2*stride, ...; trailing fragments shorter
// than length are dropped.
std::vector<Window> window_sequence(const SequenceRecord& record, std::int64_t length,
                                    std::int64_t stride);

std::vector<Window> window_corpus(const std::vector<SequenceRecord>& records,
                                  std::int64_t length, std::int64_t stride);

// Deterministic shuffle under seed, then |val| = round(val_fraction * n).
std::pair<std::vector<Window>, std::vector<Window>> split_dataset(
    const std::vector<Window>& windows, double val_fraction, std::uint64_t seed);

}  // namespace had
