#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/frechet.hpp"
#include "f2f/nn.hpp"

namespace f2f {

// Mean-pooled fully connected MIL head: bag of patch embeddings -> 3 logits.
// Mean pooling makes the model exactly permutation-invariant over the bag.
struct MILModel {
    nn::Linear l1, l2;

    MILModel() = default;
    MILModel(int64_t embed_dim, Rng& rng) : l1(embed_dim, 64, rng), l2(64, 3, rng) {}

    static Tensor pool(const std::vector<Tensor>& bag) {
        if (bag.empty()) throw std::invalid_argument("MIL: empty bag");
        Tensor mean(bag[0].shape, 0.f);
        for (const Tensor& e : bag)
            for (int64_t i = 0; i < mean.numel(); ++i) mean[i] += e[i] / float(bag.size());
        return mean;
    }

    Var logits_graph(const Var& pooled) const {
        return l2.forward(silu(l1.forward(pooled)));
    }

    Tensor logits(const std::vector<Tensor>& bag) const {
        NoGrad ng;
        return logits_graph(make_var(pool(bag)))->value;
    }

    float train_step(const std::vector<Tensor>& bag, int label, nn::Adam& opt) {
        opt.zero_grad();
        Var loss = softmax_cross_entropy(logits_graph(make_var(pool(bag))), {label});
        backward(loss);
        opt.step();
        return loss->value[0];
    }

    void params(nn::ParamList& out, const std::string& prefix) const {
        l1.params(out, prefix + ".l1");
        l2.params(out, prefix + ".l2");
    }
};

// rank-based (Mann-Whitney) AUC with tie correction
inline double binary_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("binary_auc: size mismatch");
    size_t n = scores.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * double(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg_rank;
        i = j + 1;
    }
    double pos_rank_sum = 0;
    int64_t n_pos = 0;
    for (size_t k = 0; k < n; ++k)
        if (labels[k]) {
            pos_rank_sum += ranks[k];
            ++n_pos;
        }
    int64_t n_neg = static_cast<int64_t>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::runtime_error("binary_auc: need both classes present");
    return (pos_rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) /
           (double(n_pos) * double(n_neg));
}

// macro one-vs-rest AUC over 3 classes from per-case class scores
inline double macro_auc(const std::vector<std::array<double, 3>>& scores,
                        const std::vector<int>& labels) {
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> s;
        std::vector<int> l;
        for (size_t i = 0; i < scores.size(); ++i) {
            s.push_back(scores[i][size_t(c)]);
            l.push_back(labels[i] == c ? 1 : 0);
        }
        total += binary_auc(s, l);
    }
    return total / 3.0;
}

struct MILEnsemble {
    std::vector<MILModel> fold_models;
    std::map<std::string, int> fold_of_case;  // case_id -> held-out fold
};

struct ClassificationReport {
    double macro_auc = 0;
    double accuracy = 0;
    double acc_stddev = 0;  // over folds
};

// stratified case-level k-fold assignment, deterministic given seed
inline std::map<std::string, int> stratified_folds(const std::vector<CaseSet>& cases,
                                                   int folds, uint64_t seed) {
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < cases.size(); ++i)
        by_class[int(cases[i].class_label)].push_back(i);
    for (auto& [cls, members] : by_class) {
        if (int(members.size()) < folds)
            throw std::invalid_argument("train_mil: class " + std::to_string(cls) + " has " +
                                        std::to_string(members.size()) + " cases, need >= " +
                                        std::to_string(folds));
        std::mt19937_64 gen(derive_seed(seed, uint64_t(cls)));
        std::shuffle(members.begin(), members.end(), gen);
    }
    std::map<std::string, int> fold_of;
    for (auto& [cls, members] : by_class)
        for (size_t k = 0; k < members.size(); ++k)
            fold_of[cases[members[k]].case_id] = int(k % size_t(folds));
    return fold_of;
}

// k-fold CV training on FFPE bags: one model per fold, each trained on the
// cases outside its fold
inline MILEnsemble train_mil(const std::vector<CaseSet>& ffpe_cases, int folds,
                             uint64_t seed, int epochs = 150, float lr = 5e-3f) {
    MILEnsemble ens;
    ens.fold_of_case = stratified_folds(ffpe_cases, folds, seed);
    int64_t dim = ffpe_cases.at(0).embeddings.at(0).numel();
    for (int k = 0; k < folds; ++k) {
        Rng rng(derive_seed(seed, 1000 + uint64_t(k)));
        MILModel model(dim, rng);
        nn::ParamList pl;
        model.params(pl, "mil");
        nn::Adam opt(nn::vars_of(pl), lr, 0.9f, 0.999f);
        std::vector<size_t> train_idx;
        for (size_t i = 0; i < ffpe_cases.size(); ++i)
            if (ens.fold_of_case.at(ffpe_cases[i].case_id) != k) train_idx.push_back(i);
        for (int e = 0; e < epochs; ++e) {
            std::shuffle(train_idx.begin(), train_idx.end(), rng.gen);
            for (size_t i : train_idx)
                model.train_step(ffpe_cases[i].embeddings, int(ffpe_cases[i].class_label), opt);
        }
        ens.fold_models.push_back(std::move(model));
    }
    return ens;
}

// Out-of-fold evaluation: every case is scored by the model that did not see
// its FFPE bag during training. AUC/accuracy pool all out-of-fold scores;
// the stddev is over per-fold accuracies.
inline ClassificationReport evaluate_classification(const MILEnsemble& ens,
                                                    const std::vector<CaseSet>& cases) {
    std::vector<std::array<double, 3>> scores;
    std::vector<int> labels;
    std::map<int, std::pair<int, int>> fold_hits;  // fold -> (correct, total)
    for (const CaseSet& c : cases) {
        auto it = ens.fold_of_case.find(c.case_id);
        if (it == ens.fold_of_case.end())
            throw std::invalid_argument("evaluate_classification: case " + c.case_id +
                                        " has no fold assignment");
        const MILModel& model = ens.fold_models.at(size_t(it->second));
        Tensor l = model.logits(c.embeddings);
        scores.push_back({double(l[0]), double(l[1]), double(l[2])});
        labels.push_back(int(c.class_label));
        int pred = int(std::max_element(l.data.begin(), l.data.end()) - l.data.begin());
        auto& [correct, total] = fold_hits[it->second];
        if (pred == int(c.class_label)) ++correct;
        ++total;
    }
    ClassificationReport rep;
    rep.macro_auc = macro_auc(scores, labels);
    int correct_total = 0;
    std::vector<double> fold_accs;
    for (auto& [fold, ct] : fold_hits) {
        correct_total += ct.first;
        fold_accs.push_back(double(ct.first) / double(ct.second));
    }
    rep.accuracy = double(correct_total) / double(labels.size());
    if (fold_accs.size() > 1) {
        double mean = std::accumulate(fold_accs.begin(), fold_accs.end(), 0.0) /
                      double(fold_accs.size());
        double var = 0;
        for (double a : fold_accs) var += (a - mean) * (a - mean);
        rep.acc_stddev = std::sqrt(var / double(fold_accs.size() - 1));
    }
    return rep;
}

}  // namespace f2f
