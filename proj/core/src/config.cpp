#include "had/config.hpp"

#include <fstream>
#include <sstream>

#include "had/errors.hpp"

namespace had {

namespace {

nlohmann::json build_defaults() {
    nlohmann::json j;
    j["data"]["fasta"] = "";
    j["data"]["window_length"] = 1026;
    j["data"]["stride"] = 0;  // 0 = non-overlapping (stride = window_length)
    j["data"]["val_fraction"] = 0.1;

    j["model"]["n_blocks"] = 4;
    j["model"]["d_model"] = 128;
    j["model"]["d_k"] = 128;
    j["model"]["d_v"] = 128;
    j["model"]["n_heads"] = 4;
    j["model"]["k"] = 6;
    j["model"]["max_len"] = 1026;
    j["model"]["mlp_hidden"] = 768;
    j["model"]["decoder_ffn_mult"] = 4;
    j["model"]["pos_encoding"] = "sinusoidal";
    j["model"]["chunk"] = 64;

    j["mask"]["ratio"] = 0.15;

    j["teacher"]["kind"] = "synthetic";
    j["teacher"]["d_t"] = 1024;
    j["teacher"]["depth"] = 2;
    j["teacher"]["seed"] = 7;
    j["teacher"]["cache"] = "";

    j["train"]["steps"] = 200;
    j["train"]["batch_size"] = 8;
    j["train"]["lr"] = 3e-4;
    j["train"]["weight_decay"] = 0.01;
    j["train"]["beta1"] = 0.9;
    j["train"]["beta2"] = 0.999;
    j["train"]["eps"] = 1e-8;
    j["train"]["warmup"] = 100;
    j["train"]["clip"] = 1.0;
    j["train"]["lambda"] = 1.0;
    j["train"]["seed"] = 0;
    j["train"]["eval_every"] = 50;
    j["train"]["val_batches"] = 4;
    j["train"]["augment_rc"] = true;

    j["ablation"]["use_attention"] = true;
    j["ablation"]["distill_mode"] = "visible";

    j["finetune"]["n_classes"] = 2;
    j["finetune"]["steps"] = 300;
    j["finetune"]["batch_size"] = 16;
    j["finetune"]["lr"] = 1e-4;
    j["finetune"]["weight_decay"] = 0.01;
    j["finetune"]["conjoin"] = true;
    j["finetune"]["head_only"] = false;
    j["finetune"]["seed"] = 0;
    j["finetune"]["metric"] = "accuracy";
    j["finetune"]["task"] = "task";

    j["io"]["checkpoint"] = "model.hadw";
    j["io"]["metrics"] = "metrics.jsonl";
    j["io"]["out"] = "out.bin";
    return j;
}

void merge_validated(nlohmann::json& base, const nlohmann::json& user, const std::string& path) {
    if (!user.is_object()) {
        throw ConfigError("config: expected object at '" + (path.empty() ? "<root>" : path) + "'");
    }
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) {
            throw ConfigError("config: unknown key '" + key_path + "'");
        }
        nlohmann::json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_validated(slot, it.value(), key_path);
        } else {
            if (slot.is_string() != it.value().is_string() ||
                slot.is_boolean() != it.value().is_boolean() ||
                (slot.is_number() && !it.value().is_number())) {
                throw ConfigError("config: key '" + key_path + "' has the wrong type");
            }
            slot = it.value();
        }
    }
}

}  // namespace

const nlohmann::json& RunConfig::defaults() {
    static const nlohmann::json d = build_defaults();
    return d;
}

RunConfig::RunConfig() : doc_(defaults()) {}

RunConfig RunConfig::parse(const std::string& text, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    nlohmann::json user;
    try {
        user = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    merge_validated(cfg.doc_, user, "");
    for (const auto& o : overrides) cfg.apply_override(o);
    return cfg;
}

RunConfig RunConfig::load_file(const std::string& path,
                               const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), overrides);
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like key.path=value: " + assignment);
    }
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json* slot = &doc_;
    std::size_t start = 0;
    std::string walked;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos
                                                                            : dot - start);
        walked = walked.empty() ? part : walked + "." + part;
        if (!slot->contains(part)) throw ConfigError("config: unknown key '" + walked + "'");
        slot = &(*slot)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (slot->is_object()) {
        throw ConfigError("config: cannot assign to group '" + key + "'");
    }
    if (slot->is_string()) {
        *slot = value;
        return;
    }
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) {
        throw ConfigError("config: cannot parse override value '" + value + "' for " + key);
    }
    if (slot->is_boolean() && !parsed.is_boolean()) {
        throw ConfigError("config: key '" + key + "' expects a boolean");
    }
    if (slot->is_number() && !parsed.is_number()) {
        throw ConfigError("config: key '" + key + "' expects a number");
    }
    *slot = parsed;
}

const nlohmann::json& RunConfig::at(const std::string& dotted) const {
    const nlohmann::json* slot = &doc_;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos
                                                                               : dot - start);
        if (!slot->contains(part)) throw ConfigError("config: unknown key '" + dotted + "'");
        slot = &(*slot)[part];
        if (dot == std::string::npos) return *slot;
        start = dot + 1;
    }
}

int RunConfig::get_int(const std::string& dotted) const { return at(dotted).get<int>(); }
std::int64_t RunConfig::get_i64(const std::string& dotted) const {
    return at(dotted).get<std::int64_t>();
}
std::uint64_t RunConfig::get_u64(const std::string& dotted) const {
    return at(dotted).get<std::uint64_t>();
}
double RunConfig::get_double(const std::string& dotted) const {
    return at(dotted).get<double>();
}
bool RunConfig::get_bool(const std::string& dotted) const { return at(dotted).get<bool>(); }
std::string RunConfig::get_string(const std::string& dotted) const {
    return at(dotted).get<std::string>();
}

}  // namespace had
