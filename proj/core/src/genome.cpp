#include "had/genome.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "had/errors.hpp"
#include "had/rng.hpp"

namespace had {

namespace {

char normalize_base(char c, std::size_t position) {
    switch (c) {
        case 'A': case 'C': case 'G': case 'T': case 'N':
            return c;
        case 'a': return 'A';
        case 'c': return 'C';
        case 'g': return 'G';
        case 't': return 'T';
        case 'n': return 'N';
        default:
            throw IllegalBase(c, position);
    }
}

}  // namespace

std::vector<SequenceRecord> parse_fasta(const std::string& bytes) {
    std::vector<SequenceRecord> records;
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    bool in_record = false;

    auto finish_record = [&records]() {
        if (!records.empty() && records.back().seq.empty()) {
            throw MalformedFasta("record '" + records.back().id + "' has an empty sequence body");
        }
    };

    while (i < n) {
        // take one line, tolerating CRLF
        std::size_t eol = bytes.find('\n', i);
        std::size_t end = (eol == std::string::npos) ? n : eol;
        std::size_t line_end = end;
        if (line_end > i && bytes[line_end - 1] == '\r') --line_end;

        if (line_end > i) {
            if (bytes[i] == '>') {
                finish_record();
                std::string id = bytes.substr(i + 1, line_end - i - 1);
                // header id = first whitespace-delimited token
                std::size_t sp = id.find_first_of(" \t");
                if (sp != std::string::npos) id.resize(sp);
                if (id.empty()) throw MalformedFasta("empty FASTA header");
                records.push_back(SequenceRecord{id, ""});
                in_record = true;
            } else {
                if (!in_record) throw MalformedFasta("sequence data before any '>' header");
                std::string& seq = records.back().seq;
                for (std::size_t p = i; p < line_end; ++p) {
                    seq.push_back(normalize_base(bytes[p], seq.size()));
                }
            }
        }
        i = (eol == std::string::npos) ? n : eol + 1;
    }
    if (!in_record) throw MalformedFasta("no records found");
    finish_record();
    return records;
}

std::vector<SequenceRecord> parse_fasta_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open FASTA file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_fasta(ss.str());
}

std::string reverse_complement(const std::string& seq) {
    std::string out;
    out.resize(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        char c = seq[seq.size() - 1 - i];
        switch (c) {
            case 'A': out[i] = 'T'; break;
            case 'C': out[i] = 'G'; break;
            case 'G': out[i] = 'C'; break;
            case 'T': out[i] = 'A'; break;
            case 'N': out[i] = 'N'; break;
            default: throw IllegalBase(c, seq.size() - 1 - i);
        }
    }
    return out;
}

std::vector<Window> window_sequence(const SequenceRecord& record, std::int64_t length,
                                    std::int64_t stride) {
    std::vector<Window> windows;
    if (length <= 0 || stride <= 0) throw HadError("window length and stride must be positive");
    const std::int64_t n = static_cast<std::int64_t>(record.seq.size());
    for (std::int64_t off = 0; off + length <= n; off += stride) {
        windows.push_back(Window{record.id, off,
                                 record.seq.substr(static_cast<std::size_t>(off),
                                                   static_cast<std::size_t>(length))});
    }
    return windows;
}

std::vector<Window> window_corpus(const std::vector<SequenceRecord>& records,
                                  std::int64_t length, std::int64_t stride) {
    std::vector<Window> all;
    for (const auto& rec : records) {
        auto w = window_sequence(rec, length, stride);
        all.insert(all.end(), w.begin(), w.end());
    }
    return all;
}

std::pair<std::vector<Window>, std::vector<Window>> split_dataset(
    const std::vector<Window>& windows, double val_fraction, std::uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
        throw HadError("val_fraction must be in [0, 1)");
    }
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(order);

    const auto n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(windows.size())));
    std::vector<Window> val, train;
    val.reserve(n_val);
    train.reserve(windows.size() - n_val);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_val ? val : train).push_back(windows[order[i]]);
    }
    return {std::move(train), std::move(val)};
}

}  // namespace had
