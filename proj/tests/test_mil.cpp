#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "f2f/mil.hpp"

using namespace f2f;

namespace {
std::vector<CaseSet> synthetic_cases(int n_cases, int per_bag, uint64_t seed,
                                     float separation) {
    Rng rng(seed);
    std::vector<CaseSet> out;
    for (int i = 0; i < n_cases; ++i) {
        CaseSet c;
        c.case_id = "case_" + std::to_string(i);
        c.class_label = ClassLabel(i % 3);
        for (int p = 0; p < per_bag; ++p) {
            Tensor e = rng.normal_tensor({8});
            e[size_t(i % 3)] += separation;
            c.embeddings.push_back(std::move(e));
        }
        out.push_back(std::move(c));
    }
    return out;
}
}  // namespace

TEST_CASE("stratified folds put one case of each class into every fold") {
    auto cases = synthetic_cases(18, 2, 1, 0.f);
    auto fold_of = stratified_folds(cases, 6, 42);
    REQUIRE(fold_of.size() == 18u);
    std::map<int, std::map<int, int>> count;  // fold -> class -> n
    for (const auto& c : cases) count[fold_of.at(c.case_id)][int(c.class_label)]++;
    REQUIRE(count.size() == 6u);
    for (const auto& [fold, by_class] : count) {
        REQUIRE(by_class.size() == 3u);
        for (const auto& [cls, n] : by_class) REQUIRE(n == 1);
    }
    REQUIRE_THROWS_AS(stratified_folds(synthetic_cases(9, 2, 1, 0.f), 6, 42),
                      std::invalid_argument);
}

TEST_CASE("bag pooling is permutation invariant") {
    Rng rng(5);
    MILModel model(8, rng);
    std::vector<Tensor> bag;
    for (int i = 0; i < 7; ++i) bag.push_back(rng.normal_tensor({8}));
    Tensor base = model.logits(bag);
    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(bag.begin(), bag.end(), gen);
        Tensor shuffled = model.logits(bag);
        for (int64_t i = 0; i < 3; ++i)
            REQUIRE(shuffled[i] == Catch::Approx(base[i]).margin(1e-5));
    }
}

TEST_CASE("binary AUC oracle values") {
    REQUIRE(binary_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
    REQUIRE(binary_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
    REQUIRE(binary_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
    REQUIRE_THROWS(binary_auc({0.1, 0.2}, {1, 1}));

    // random scores over 300 cases hover near chance (averaged over trials)
    Rng rng(7);
    double total = 0;
    int trials = 25;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> s;
        std::vector<int> l;
        for (int i = 0; i < 300; ++i) {
            s.push_back(rng.uniform());
            l.push_back(i % 2);
        }
        total += binary_auc(s, l);
    }
    REQUIRE(total / trials == Catch::Approx(0.5).margin(0.05));
}

TEST_CASE("macro AUC of one-hot perfect scores is 1") {
    std::vector<std::array<double, 3>> scores;
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) {
        int c = i % 3;
        std::array<double, 3> s{0, 0, 0};
        s[size_t(c)] = 1;
        scores.push_back(s);
        labels.push_back(c);
    }
    REQUIRE(macro_auc(scores, labels) == 1.0);
}

TEST_CASE("MIL 6-fold training separates well-separated classes out of fold") {
    auto cases = synthetic_cases(18, 6, 11, 3.0f);
    MILEnsemble ens = train_mil(cases, 6, 123, 60);
    ClassificationReport rep = evaluate_classification(ens, cases);
    REQUIRE(rep.macro_auc > 0.95);
    REQUIRE(rep.accuracy > 0.9);
    REQUIRE(rep.acc_stddev >= 0.0);
}
