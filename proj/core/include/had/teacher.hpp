#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "had/masking.hpp"
#include "had/tensor.hpp"
#include "had/tokenize.hpp"

namespace had {

// Per-k-mer-token teacher vectors for one sequence; row count = L/k.
struct TeacherEmbedding {
    std::string seq_key;
    int n_tokens = 0;
    int d_t = 0;
    std::vector<float> values;  // row-major (n_tokens, d_t)
};

enum class TeacherKind { synthetic, cache };

struct TeacherConfig {
    TeacherKind kind = TeacherKind::synthetic;
    int d_t = 1024;
    int k = 6;
    int depth = 2;           // synthetic transformer layers
    int max_tokens = 512;    // positional table length
    std::uint64_t seed = 7;  // synthetic init seed
    std::string cache_path;  // cache backend
};

// Frozen teacher backend. Outputs are deterministic per (sequence, config)
// and never carry gradients.
class Teacher {
public:
    virtual ~Teacher() = default;
    virtual TeacherEmbedding embed(const TokenizedSequence& seq) const = 0;
    virtual int d_t() const = 0;
};

// Fixed-seed randomly initialized transformer encoder over k-mer ids,
// evaluated without masking. Emulates "a frozen pretrained teacher" at desk
// scale; size ablations vary depth/d_t.
class SyntheticTeacher : public Teacher {
public:
    explicit SyntheticTeacher(const TeacherConfig& cfg);
    TeacherEmbedding embed(const TokenizedSequence& seq) const override;
    int d_t() const override { return cfg_.d_t; }

private:
    TeacherConfig cfg_;
    KmerVocab vocab_;
    struct Layer {
        std::vector<float> ln1_g, ln1_b, ln2_g, ln2_b;
        std::vector<float> wq, wk, wv, wo;  // (d, d)
        std::vector<float> w1, b1, w2, b2;  // ffn d -> 2d -> d
    };
    std::vector<float> embedding_;  // (vocab, d)
    std::vector<float> pos_;        // (max_tokens, d)
    std::vector<Layer> layers_;
    std::vector<float> final_g_, final_b_;
};

// Precomputed embeddings from a HADT cache file, keyed by the window's
// sequence text. Throws CacheMiss for unknown sequences.
class CacheTeacher : public Teacher {
public:
    CacheTeacher(const std::string& path, int expected_d_t);
    TeacherEmbedding embed(const TokenizedSequence& seq) const override;
    int d_t() const override { return d_t_; }
    std::size_t size() const { return entries_.size(); }

private:
    int d_t_ = 0;
    struct Entry {
        int n_tokens;
        std::vector<float> values;
    };
    std::map<std::string, Entry> entries_;
};

std::unique_ptr<Teacher> make_teacher(const TeacherConfig& cfg);

// Rows of emb at the plan's visible k-mer indices, ascending; index-aligned
// with the student's pooled visible groups.
std::vector<float> filter_visible(const TeacherEmbedding& emb, const MaskPlan& plan);

// Rows at the masked k-mer indices (masked-distillation ablation).
std::vector<float> filter_masked(const TeacherEmbedding& emb, const MaskPlan& plan);

// Cache file: magic "HADT", version u32, d_T u32, count u64; per entry key
// length u32 + UTF-8 key, n_tokens u32, f32 row-major data.
void save_teacher_cache(const std::vector<TeacherEmbedding>& entries, int d_t,
                        const std::string& path);

std::vector<TeacherEmbedding> load_teacher_cache(const std::string& path);

// Embeds every window (and its reverse complement, for RC augmentation) with
// the given backend and writes the cache file.
void build_teacher_cache(const std::vector<Window>& corpus, const TeacherConfig& cfg,
                         const std::string& out_path, bool include_reverse_complement = true);

// Constant (gradient-free) tensor view of teacher rows, cast to T.
template <typename T>
TensorT<T> rows_to_tensor(const std::vector<float>& rows, int d_t) {
    const int n = static_cast<int>(rows.size()) / d_t;
    std::vector<T> vals(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = static_cast<T>(rows[i]);
    return TensorT<T>::from_data({n, d_t}, std::move(vals));
}

}  // namespace had
