#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/schedule.hpp"
#include "f2f/synth.hpp"

namespace f2f {

// One declarative config for every tunable. Unknown keys are rejected, and
// every command writes the resolved config next to its outputs so a run can
// be reproduced from the snapshot alone.
struct RunConfig {
    // schedule
    int t_train = 1000;
    int t_inference = 50;
    // guidance
    float guidance_gs = 4.0f;
    float strength = 0.7f;
    float quantile = 0.7f;
    bool prox_enabled = false;
    bool lambda_is_quantile = false;
    // translation
    float alpha = 0.25f;
    int lora_rank = 8;
    // optimizer (LDM fine-tuning)
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float weight_decay = 0.01f;
    // dataset
    std::string data_root = "data";
    int n_cases = 18;
    int patches_per_case = 16;
    int patch_size = 64;
    // training budgets
    int vae_steps = 6000;
    int ldm_steps = 12000;
    int translator_steps = 1200;
    int extractor_epochs = 6;
    int mil_epochs = 150;
    int mil_folds = 6;
    int eval_patches_per_case = 8;
    // checkpoints / outputs
    std::string ldm_checkpoint = "runs/ldm.f2ft";
    std::string translator_checkpoint = "runs/translator.f2ft";
    std::string extractor_checkpoint = "runs/extractor.f2ft";
    std::string output_root = "runs";
    uint64_t seed = 1;

    GuidanceConfig guidance() const {
        GuidanceConfig g;
        g.guidance_scale = guidance_gs;
        g.strength = strength;
        g.t_inference = t_inference;
        g.prox_enabled = prox_enabled;
        g.quantile = quantile;
        g.lambda_is_quantile = lambda_is_quantile;
        return g;
    }
};

namespace config_detail {

struct Field {
    const char* key;
    enum Kind { Int, Float, Bool, String, U64 } kind;
    void* ptr;
};

inline std::vector<Field> fields(RunConfig& c) {
    return {
        {"schedule.t_train", Field::Int, &c.t_train},
        {"schedule.t_inference", Field::Int, &c.t_inference},
        {"guidance.GS", Field::Float, &c.guidance_gs},
        {"guidance.S", Field::Float, &c.strength},
        {"guidance.q", Field::Float, &c.quantile},
        {"guidance.prox_enabled", Field::Bool, &c.prox_enabled},
        {"guidance.lambda_is_quantile", Field::Bool, &c.lambda_is_quantile},
        {"alpha", Field::Float, &c.alpha},
        {"lora_rank", Field::Int, &c.lora_rank},
        {"optimizer.lr", Field::Float, &c.lr},
        {"optimizer.beta1", Field::Float, &c.beta1},
        {"optimizer.beta2", Field::Float, &c.beta2},
        {"optimizer.weight_decay", Field::Float, &c.weight_decay},
        {"dataset.root", Field::String, &c.data_root},
        {"dataset.n_cases", Field::Int, &c.n_cases},
        {"dataset.patches_per_case", Field::Int, &c.patches_per_case},
        {"dataset.patch_size", Field::Int, &c.patch_size},
        {"training.vae_steps", Field::Int, &c.vae_steps},
        {"training.ldm_steps", Field::Int, &c.ldm_steps},
        {"training.translator_steps", Field::Int, &c.translator_steps},
        {"training.extractor_epochs", Field::Int, &c.extractor_epochs},
        {"training.mil_epochs", Field::Int, &c.mil_epochs},
        {"training.mil_folds", Field::Int, &c.mil_folds},
        {"eval.patches_per_case", Field::Int, &c.eval_patches_per_case},
        {"checkpoints.ldm", Field::String, &c.ldm_checkpoint},
        {"checkpoints.translator", Field::String, &c.translator_checkpoint},
        {"checkpoints.extractor", Field::String, &c.extractor_checkpoint},
        {"output_root", Field::String, &c.output_root},
        {"seed", Field::U64, &c.seed},
    };
}

inline void set_field(const Field& f, const nlohmann::json& v) {
    switch (f.kind) {
        case Field::Int: *static_cast<int*>(f.ptr) = v.get<int>(); break;
        case Field::Float: *static_cast<float*>(f.ptr) = v.get<float>(); break;
        case Field::Bool: *static_cast<bool*>(f.ptr) = v.get<bool>(); break;
        case Field::String: *static_cast<std::string*>(f.ptr) = v.get<std::string>(); break;
        case Field::U64: *static_cast<uint64_t*>(f.ptr) = v.get<uint64_t>(); break;
    }
}

inline nlohmann::json get_field(const Field& f) {
    switch (f.kind) {
        case Field::Int: return *static_cast<int*>(f.ptr);
        case Field::Float: return *static_cast<float*>(f.ptr);
        case Field::Bool: return *static_cast<bool*>(f.ptr);
        case Field::String: return *static_cast<std::string*>(f.ptr);
        default: return *static_cast<uint64_t*>(f.ptr);
    }
}

inline void flatten(const nlohmann::json& j, const std::string& prefix,
                    std::vector<std::pair<std::string, nlohmann::json>>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object())
            flatten(*it, key, out);
        else
            out.emplace_back(key, *it);
    }
}

}  // namespace config_detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    auto fields = config_detail::fields(c);
    std::vector<std::pair<std::string, nlohmann::json>> flat;
    config_detail::flatten(j, "", flat);
    for (const auto& [key, value] : flat) {
        bool found = false;
        for (const auto& f : fields)
            if (key == f.key) {
                config_detail::set_field(f, value);
                found = true;
                break;
            }
        if (!found) throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    RunConfig& mut = const_cast<RunConfig&>(c);
    nlohmann::json j;
    for (const auto& f : config_detail::fields(mut)) {
        nlohmann::json* slot = &j;
        std::string key = f.key;
        size_t pos;
        while ((pos = key.find('.')) != std::string::npos) {
            slot = &(*slot)[key.substr(0, pos)];
            key = key.substr(pos + 1);
        }
        (*slot)[key] = config_detail::get_field(f);
    }
    return j;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return config_from_json(j);
}

inline void save_config(const std::string& path, const RunConfig& c) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    os << config_to_json(c).dump(2) << "\n";
}

// "key=value" override with a dotted path, for CLI flags
inline void apply_override(RunConfig& c, const std::string& key, const std::string& value) {
    for (const auto& f : config_detail::fields(c)) {
        if (key != f.key) continue;
        nlohmann::json v;
        switch (f.kind) {
            case config_detail::Field::Int: v = std::stoi(value); break;
            case config_detail::Field::Float: v = std::stof(value); break;
            case config_detail::Field::Bool:
                v = (value == "true" || value == "1");
                break;
            case config_detail::Field::String: v = value; break;
            case config_detail::Field::U64: v = uint64_t(std::stoull(value)); break;
        }
        config_detail::set_field(f, v);
        return;
    }
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

}  // namespace f2f
