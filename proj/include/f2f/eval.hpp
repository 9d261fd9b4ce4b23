#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "f2f/frechet.hpp"
#include "f2f/mil.hpp"
#include "f2f/train.hpp"

namespace f2f {

// Groups manifest records by case and extracts embeddings. `pixel_root`
// lets the same manifest address translated outputs stored under a
// different directory with mirrored relative paths.
inline std::vector<CaseSet> build_case_sets(const std::vector<ManifestRecord>& records,
                                            const std::string& pixel_root,
                                            const FeatureExtractor& ex,
                                            int max_patches_per_case = 0) {
    std::map<std::string, CaseSet> by_case;
    std::map<std::string, int> counts;
    for (const auto& r : records) {
        int& n = counts[r.case_id];
        if (max_patches_per_case > 0 && n >= max_patches_per_case) continue;
        ++n;
        CaseSet& c = by_case[r.case_id];
        c.case_id = r.case_id;
        c.class_label = r.class_label;
        c.embeddings.push_back(ex.extract(load_patch(pixel_root, r)));
    }
    std::vector<CaseSet> out;
    for (auto& [id, c] : by_case) out.push_back(std::move(c));
    return out;
}

// Out-of-fold scores for a named condition (ffpe / fs / translated).
struct ConditionMetrics {
    std::string name;
    double macro_auc = 0;
    double accuracy = 0;
    double acc_stddev = 0;
    double case_fd = 0;  // vs FFPE reference; 0 for the reference row
};

// Scores arbitrary bags with the ensemble, held-out fold per case. Cases
// missing from the fold map are rejected — the protocol is strictly
// out-of-fold.
inline ClassificationReport score_out_of_fold(const MILEnsemble& ens,
                                              const std::vector<CaseSet>& cases) {
    return evaluate_classification(ens, cases);
}

struct EvalResult {
    std::vector<ConditionMetrics> rows;

    const ConditionMetrics& row(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return r;
        throw std::invalid_argument("eval: no row named " + name);
    }
};

// Full evaluation: MIL trained on FFPE bags (6-fold, case-stratified), each
// condition scored out-of-fold; CaseFD of each condition against the FFPE
// reference under the toy extractor.
inline EvalResult evaluate_conditions(
    const std::vector<CaseSet>& ffpe,
    const std::vector<std::pair<std::string, std::vector<CaseSet>>>& conditions,
    const RunConfig& cfg) {
    MILEnsemble ens = train_mil(ffpe, cfg.mil_folds, derive_seed(cfg.seed, 201),
                                cfg.mil_epochs);
    EvalResult out;
    {
        ClassificationReport rep = evaluate_classification(ens, ffpe);
        out.rows.push_back({"ffpe", rep.macro_auc, rep.accuracy, rep.acc_stddev, 0.0});
    }
    for (const auto& [name, cases] : conditions) {
        ClassificationReport rep = evaluate_classification(ens, cases);
        double fd = mean_case_fd(cases, ffpe);
        out.rows.push_back({name, rep.macro_auc, rep.accuracy, rep.acc_stddev, fd});
    }
    return out;
}

// Table-1-shaped CSV: one row per condition, fixed precision so repeated
// runs are byte-identical.
inline void write_metrics_csv(const std::string& path, const EvalResult& result) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("eval: cannot write " + path);
    os << "condition,macro_auc,accuracy,acc_stddev,case_fd_toy_conv\n";
    char buf[256];
    for (const auto& r : result.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.name.c_str(),
                      r.macro_auc, r.accuracy, r.acc_stddev, r.case_fd);
        os << buf;
    }
}

inline void write_metrics_json(const std::string& path, const EvalResult& result) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : result.rows) {
        for (const char* metric : {"macro_auc", "accuracy", "case_fd"}) {
            double v = std::string(metric) == "macro_auc"  ? r.macro_auc
                       : std::string(metric) == "accuracy" ? r.accuracy
                                                           : r.case_fd;
            records.push_back({{"metric", metric},
                               {"extractor", "toy-conv"},
                               {"condition", r.name},
                               {"value", v}});
        }
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("eval: cannot write " + path);
    os << records.dump(2) << "\n";
}

}  // namespace f2f
