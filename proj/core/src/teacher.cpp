#include "had/teacher.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "had/errors.hpp"
#include "had/rng.hpp"

namespace had {

namespace {

void layer_norm_inplace(std::vector<float>& x, int n, int d, const std::vector<float>& g,
                        const std::vector<float>& b) {
    for (int i = 0; i < n; ++i) {
        float* row = x.data() + static_cast<std::size_t>(i) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += row[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dd = row[j] - mu;
            var += dd * dd;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (int j = 0; j < d; ++j) {
            row[j] = static_cast<float>((row[j] - mu) * inv * g[static_cast<std::size_t>(j)] +
                                        b[static_cast<std::size_t>(j)]);
        }
    }
}

std::vector<float> random_matrix(Rng& rng, std::size_t n, double stddev) {
    std::vector<float> m(n);
    for (auto& v : m) v = static_cast<float>(rng.normal(0.0, stddev));
    return m;
}

}  // namespace

SyntheticTeacher::SyntheticTeacher(const TeacherConfig& cfg) : cfg_(cfg), vocab_(cfg.k) {
    if (cfg.d_t <= 0) throw HadError("teacher d_t must be positive");
    Rng rng(derive_seed(cfg.seed, "teacher.init"));
    const int d = cfg.d_t;
    const double ws = 1.0 / std::sqrt(static_cast<double>(d));
    embedding_ = random_matrix(rng, static_cast<std::size_t>(vocab_.size) * d, 1.0);
    pos_.resize(static_cast<std::size_t>(cfg.max_tokens) * d);
    for (int p = 0; p < cfg.max_tokens; ++p) {
        for (int j = 0; j < d; ++j) {
            const double angle = p / std::pow(10000.0, 2.0 * (j / 2) / static_cast<double>(d));
            pos_[static_cast<std::size_t>(p) * d + j] =
                static_cast<float>((j % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    }
    layers_.resize(static_cast<std::size_t>(cfg.depth));
    for (auto& layer : layers_) {
        layer.ln1_g.assign(static_cast<std::size_t>(d), 1.0f);
        layer.ln1_b.assign(static_cast<std::size_t>(d), 0.0f);
        layer.ln2_g.assign(static_cast<std::size_t>(d), 1.0f);
        layer.ln2_b.assign(static_cast<std::size_t>(d), 0.0f);
        layer.wq = random_matrix(rng, static_cast<std::size_t>(d) * d, ws);
        layer.wk = random_matrix(rng, static_cast<std::size_t>(d) * d, ws);
        layer.wv = random_matrix(rng, static_cast<std::size_t>(d) * d, ws);
        layer.wo = random_matrix(rng, static_cast<std::size_t>(d) * d, ws);
        layer.w1 = random_matrix(rng, static_cast<std::size_t>(d) * 2 * d, ws);
        layer.b1.assign(static_cast<std::size_t>(2 * d), 0.0f);
        layer.w2 = random_matrix(rng, static_cast<std::size_t>(2 * d) * d,
                                 1.0 / std::sqrt(2.0 * d));
        layer.b2.assign(static_cast<std::size_t>(d), 0.0f);
    }
    final_g_.assign(static_cast<std::size_t>(d), 1.0f);
    final_b_.assign(static_cast<std::size_t>(d), 0.0f);
}

TeacherEmbedding SyntheticTeacher::embed(const TokenizedSequence& seq) const {
    const int n = static_cast<int>(seq.kmer_ids.size());
    const int d = cfg_.d_t;
    if (n == 0) throw ShapeMismatch("teacher: sequence has no k-mer tokens");
    if (n > cfg_.max_tokens) {
        throw ShapeMismatch("teacher: " + std::to_string(n) + " tokens exceed max_tokens=" +
                            std::to_string(cfg_.max_tokens));
    }
    std::vector<float> h(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i) {
        const auto id = seq.kmer_ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= vocab_.size) {
            throw InvalidTokenId("k-mer id " + std::to_string(id) + " out of vocabulary");
        }
        const float* e = embedding_.data() + static_cast<std::size_t>(id) * d;
        const float* p = pos_.data() + static_cast<std::size_t>(i) * d;
        float* row = h.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) row[j] = e[j] + p[j];
    }

    std::vector<float> q(h.size()), k(h.size()), v(h.size()), attn(h.size()), tmp(h.size());
    std::vector<float> scores(static_cast<std::size_t>(n) * n);
    std::vector<float> ff(static_cast<std::size_t>(n) * 2 * d);
    const float scale_qk = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));

    for (const auto& layer : layers_) {
        tmp = h;
        layer_norm_inplace(tmp, n, d, layer.ln1_g, layer.ln1_b);
        detail::dense_mm(tmp.data(), layer.wq.data(), q.data(), n, d, d);
        detail::dense_mm(tmp.data(), layer.wk.data(), k.data(), n, d, d);
        detail::dense_mm(tmp.data(), layer.wv.data(), v.data(), n, d, d);
        for (int i = 0; i < n; ++i) {
            const float* qi = q.data() + static_cast<std::size_t>(i) * d;
            float* srow = scores.data() + static_cast<std::size_t>(i) * n;
            float mx = -1e30f;
            for (int j = 0; j < n; ++j) {
                srow[j] = scale_qk * static_cast<float>(detail::dot(
                                         qi, k.data() + static_cast<std::size_t>(j) * d,
                                         static_cast<std::size_t>(d)));
                mx = std::max(mx, srow[j]);
            }
            double z = 0.0;
            for (int j = 0; j < n; ++j) {
                srow[j] = std::exp(srow[j] - mx);
                z += srow[j];
            }
            const float inv = static_cast<float>(1.0 / z);
            for (int j = 0; j < n; ++j) srow[j] *= inv;
        }
        detail::dense_mm(scores.data(), v.data(), tmp.data(), n, n, d);
        detail::dense_mm(tmp.data(), layer.wo.data(), attn.data(), n, d, d);
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += attn[i];

        tmp = h;
        layer_norm_inplace(tmp, n, d, layer.ln2_g, layer.ln2_b);
        detail::dense_mm(tmp.data(), layer.w1.data(), ff.data(), n, d, 2 * d);
        for (int i = 0; i < n; ++i) {
            float* row = ff.data() + static_cast<std::size_t>(i) * 2 * d;
            for (int j = 0; j < 2 * d; ++j) {
                const float x = row[j] + layer.b1[static_cast<std::size_t>(j)];
                const float sg = x >= 0.0f ? 1.0f / (1.0f + std::exp(-x))
                                           : std::exp(x) / (1.0f + std::exp(x));
                row[j] = x * sg;  // silu
            }
        }
        detail::dense_mm(ff.data(), layer.w2.data(), tmp.data(), n, 2 * d, d);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                h[static_cast<std::size_t>(i) * d + j] +=
                    tmp[static_cast<std::size_t>(i) * d + j] + layer.b2[static_cast<std::size_t>(j)];
            }
        }
    }
    layer_norm_inplace(h, n, d, final_g_, final_b_);

    TeacherEmbedding out;
    out.seq_key = seq.source.seq;
    out.n_tokens = n;
    out.d_t = d;
    out.values = std::move(h);
    return out;
}

CacheTeacher::CacheTeacher(const std::string& path, int expected_d_t) {
    auto entries = load_teacher_cache(path);
    if (entries.empty()) {
        d_t_ = expected_d_t;
    } else {
        d_t_ = entries.front().d_t;
    }
    if (expected_d_t > 0 && d_t_ != expected_d_t) {
        throw DimensionMismatch("teacher cache d_T=" + std::to_string(d_t_) +
                                " but configuration expects d_T=" + std::to_string(expected_d_t));
    }
    for (auto& e : entries) {
        entries_[e.seq_key] = Entry{e.n_tokens, std::move(e.values)};
    }
}

TeacherEmbedding CacheTeacher::embed(const TokenizedSequence& seq) const {
    auto it = entries_.find(seq.source.seq);
    if (it == entries_.end()) {
        throw CacheMiss("teacher cache has no entry for window " + seq.source.record_id + ":" +
                        std::to_string(seq.source.offset));
    }
    TeacherEmbedding out;
    out.seq_key = it->first;
    out.n_tokens = it->second.n_tokens;
    out.d_t = d_t_;
    out.values = it->second.values;
    return out;
}

std::unique_ptr<Teacher> make_teacher(const TeacherConfig& cfg) {
    if (cfg.kind == TeacherKind::synthetic) return std::make_unique<SyntheticTeacher>(cfg);
    return std::make_unique<CacheTeacher>(cfg.cache_path, cfg.d_t);
}

namespace {

std::vector<float> select_rows(const TeacherEmbedding& emb, const std::vector<int>& idx) {
    std::vector<float> out;
    out.reserve(idx.size() * static_cast<std::size_t>(emb.d_t));
    for (int j : idx) {
        if (j < 0 || j >= emb.n_tokens) {
            throw ShapeMismatch("teacher row " + std::to_string(j) + " out of range [0," +
                                std::to_string(emb.n_tokens) + ")");
        }
        const float* row = emb.values.data() + static_cast<std::size_t>(j) * emb.d_t;
        out.insert(out.end(), row, row + emb.d_t);
    }
    return out;
}

}  // namespace

std::vector<float> filter_visible(const TeacherEmbedding& emb, const MaskPlan& plan) {
    if (emb.n_tokens != plan.L / plan.k) {
        throw ShapeMismatch("teacher embedding has " + std::to_string(emb.n_tokens) +
                            " rows, mask plan expects " + std::to_string(plan.L / plan.k));
    }
    return select_rows(emb, plan.visible_kmer);
}

std::vector<float> filter_masked(const TeacherEmbedding& emb, const MaskPlan& plan) {
    if (emb.n_tokens != plan.L / plan.k) {
        throw ShapeMismatch("teacher embedding has " + std::to_string(emb.n_tokens) +
                            " rows, mask plan expects " + std::to_string(plan.L / plan.k));
    }
    return select_rows(emb, plan.masked_kmer);
}

namespace {

template <typename V>
void write_pod(std::ostream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw IoError("teacher cache: unexpected end of file");
    return v;
}

constexpr char kCacheMagic[4] = {'H', 'A', 'D', 'T'};
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

void save_teacher_cache(const std::vector<TeacherEmbedding>& entries, int d_t,
                        const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open teacher cache for writing: " + path);
    out.write(kCacheMagic, 4);
    write_pod<std::uint32_t>(out, kCacheVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d_t));
    write_pod<std::uint64_t>(out, entries.size());
    for (const auto& e : entries) {
        if (e.d_t != d_t) {
            throw DimensionMismatch("cache entry d_T=" + std::to_string(e.d_t) +
                                    " differs from file d_T=" + std::to_string(d_t));
        }
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.seq_key.size()));
        out.write(e.seq_key.data(), static_cast<std::streamsize>(e.seq_key.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(e.n_tokens));
        out.write(reinterpret_cast<const char*>(e.values.data()),
                  static_cast<std::streamsize>(e.values.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing teacher cache: " + path);
}

std::vector<TeacherEmbedding> load_teacher_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open teacher cache: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0) {
        throw IoError("not a HADT teacher cache: " + path);
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kCacheVersion) {
        throw IoError("unsupported teacher cache version " + std::to_string(version));
    }
    const int d_t = static_cast<int>(read_pod<std::uint32_t>(in));
    const auto count = read_pod<std::uint64_t>(in);
    std::vector<TeacherEmbedding> entries;
    entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        TeacherEmbedding e;
        e.d_t = d_t;
        const auto key_len = read_pod<std::uint32_t>(in);
        e.seq_key.resize(key_len);
        in.read(e.seq_key.data(), key_len);
        e.n_tokens = static_cast<int>(read_pod<std::uint32_t>(in));
        e.values.resize(static_cast<std::size_t>(e.n_tokens) * d_t);
        in.read(reinterpret_cast<char*>(e.values.data()),
                static_cast<std::streamsize>(e.values.size() * sizeof(float)));
        if (!in) throw IoError("teacher cache truncated: " + path);
        entries.push_back(std::move(e));
    }
    return entries;
}

void build_teacher_cache(const std::vector<Window>& corpus, const TeacherConfig& cfg,
                         const std::string& out_path, bool include_reverse_complement) {
    SyntheticTeacher teacher(cfg);
    std::vector<TeacherEmbedding> entries;
    std::map<std::string, bool> seen;
    auto add = [&](const Window& w) {
        if (seen.count(w.seq)) return;
        seen[w.seq] = true;
        entries.push_back(teacher.embed(tokenize_window(w, cfg.k)));
    };
    for (const auto& w : corpus) {
        add(w);
        if (include_reverse_complement) {
            Window rc = w;
            rc.seq = reverse_complement(w.seq);
            add(rc);
        }
    }
    save_teacher_cache(entries, cfg.d_t, out_path);
}

}  // namespace had
