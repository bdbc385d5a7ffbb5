#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "had/errors.hpp"
#include "had/rng.hpp"
#include "had/tensor.hpp"

namespace had {

// Named trainable tensors with a stable iteration order. Names are
// dotted paths, e.g. "gdn.0.fwd.w_alpha".
template <typename T>
class ParamStore {
public:
    TensorT<T> create(const std::string& name, std::vector<int> shape, Rng& rng, double stddev) {
        auto t = TensorT<T>::zeros(shape, /*requires_grad=*/true);
        if (stddev > 0.0) {
            for (auto& v : t.mut_data()) v = static_cast<T>(rng.normal(0.0, stddev));
        }
        return insert(name, t);
    }

    TensorT<T> create_constant(const std::string& name, std::vector<int> shape, T value) {
        auto t = TensorT<T>::filled(shape, value, /*requires_grad=*/true);
        return insert(name, t);
    }

    TensorT<T> insert(const std::string& name, TensorT<T> t) {
        if (params_.count(name)) throw HadError("duplicate parameter name: " + name);
        params_.emplace(name, t);
        return t;
    }

    const TensorT<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw HadError("unknown parameter: " + name);
        return it->second;
    }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params_) n += t.numel();
        return n;
    }

    std::size_t size() const { return params_.size(); }

    const std::map<std::string, TensorT<T>>& entries() const { return params_; }

    void zero_grads() {
        for (auto& [name, t] : params_) {
            t.raw()->grad.assign(t.numel(), T(0));
        }
    }

private:
    std::map<std::string, TensorT<T>> params_;
};

namespace ckpt_detail {

template <typename V>
void write_pod(std::ostream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw IoError("checkpoint: unexpected end of file");
    return v;
}

}  // namespace ckpt_detail

inline constexpr char kCheckpointMagic[4] = {'H', 'A', 'D', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary checkpoint: magic "HADW", version u32, count u64, then per parameter
// name length u32 + UTF-8 name, rank u32, dims u64 each, f32 data row-major.
template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, 4);
    ckpt_detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
    ckpt_detail::write_pod<std::uint64_t>(out, store.size());
    for (const auto& [name, t] : store.entries()) {
        ckpt_detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        ckpt_detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) {
            ckpt_detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.dim(i)));
        }
        for (const T v : t.data()) {
            ckpt_detail::write_pod<float>(out, static_cast<float>(v));
        }
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

struct CheckpointEntry {
    std::vector<int> shape;
    std::vector<float> values;
};

inline std::map<std::string, CheckpointEntry> load_checkpoint_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw IoError("not a HADW checkpoint: " + path);
    }
    const auto version = ckpt_detail::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = ckpt_detail::read_pod<std::uint64_t>(in);
    std::map<std::string, CheckpointEntry> entries;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto name_len = ckpt_detail::read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rank = ckpt_detail::read_pod<std::uint32_t>(in);
        CheckpointEntry entry;
        std::uint64_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto d = ckpt_detail::read_pod<std::uint64_t>(in);
            entry.shape.push_back(static_cast<int>(d));
            numel *= d;
        }
        entry.values.resize(numel);
        in.read(reinterpret_cast<char*>(entry.values.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw IoError("checkpoint truncated: " + path);
        entries.emplace(std::move(name), std::move(entry));
    }
    return entries;
}

// Loads values into an existing store; every checkpoint entry must match an
// existing parameter in name and shape. Extra parameters in the store are
// left at their initialized values only if allow_partial is set.
template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::string& path, bool allow_partial = false) {
    auto entries = load_checkpoint_raw(path);
    std::size_t matched = 0;
    for (const auto& [name, t] : store.entries()) {
        auto it = entries.find(name);
        if (it == entries.end()) {
            if (allow_partial) continue;
            throw DimensionMismatch("checkpoint is missing parameter '" + name + "'");
        }
        if (it->second.shape != t.shape()) {
            throw DimensionMismatch(
                "checkpoint parameter '" + name + "' has shape " +
                TensorT<T>::shape_str(it->second.shape) + ", model expects " +
                TensorT<T>::shape_str(t.shape()));
        }
        auto& dst = const_cast<std::vector<T>&>(t.data());
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<T>(it->second.values[i]);
        }
        ++matched;
    }
    if (!allow_partial && matched != entries.size()) {
        throw DimensionMismatch("checkpoint has " + std::to_string(entries.size()) +
                                " parameters, model consumed " + std::to_string(matched));
    }
}

}  // namespace had
