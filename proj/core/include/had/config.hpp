#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace had {

// Run configuration: a JSON document validated against the known key schema
// (unknown keys are rejected) with dotted-path command-line overrides, e.g.
// "train.steps=10".
class RunConfig {
public:
    static const nlohmann::json& defaults();

    // Defaults only.
    RunConfig();

    // Parse + validate + apply overrides. Throws ConfigError.
    static RunConfig load_file(const std::string& path,
                               const std::vector<std::string>& overrides = {});
    static RunConfig parse(const std::string& text,
                           const std::vector<std::string>& overrides = {});

    void apply_override(const std::string& assignment);  // "a.b=value"

    int get_int(const std::string& dotted) const;
    std::int64_t get_i64(const std::string& dotted) const;
    std::uint64_t get_u64(const std::string& dotted) const;
    double get_double(const std::string& dotted) const;
    bool get_bool(const std::string& dotted) const;
    std::string get_string(const std::string& dotted) const;

    const nlohmann::json& json() const { return doc_; }
    std::string dump(int indent = 2) const { return doc_.dump(indent); }

private:
    const nlohmann::json& at(const std::string& dotted) const;
    nlohmann::json doc_;
};

}  // namespace had
