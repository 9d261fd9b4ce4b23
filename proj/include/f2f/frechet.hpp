#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/types.hpp"

namespace f2f {

struct FrechetStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric, ridged by 1e-6 I
};

inline constexpr double kCovRidge = 1e-6;

// Sample mean and (n-1)-denominator covariance, plus ridge for estimability
// at small n.
inline FrechetStats fit_stats(const std::vector<Tensor>& embeddings) {
    if (embeddings.size() < 2)
        throw std::invalid_argument("fit_stats requires at least 2 embeddings");
    int64_t n = static_cast<int64_t>(embeddings.size());
    int64_t d = embeddings[0].numel();
    Eigen::MatrixXd X(n, d);
    for (int64_t i = 0; i < n; ++i) {
        if (embeddings[static_cast<size_t>(i)].numel() != d)
            throw std::invalid_argument("fit_stats: inconsistent embedding dims");
        for (int64_t j = 0; j < d; ++j)
            X(i, j) = embeddings[static_cast<size_t>(i)][j];
    }
    FrechetStats s;
    s.mean = X.colwise().mean();
    Eigen::MatrixXd centered = X.rowwise() - s.mean.transpose();
    s.cov = centered.transpose() * centered / double(n - 1);
    s.cov += kCovRidge * Eigen::MatrixXd::Identity(d, d);
    return s;
}

// Frechet distance between Gaussians:
//   |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2})
// The cross term uses the symmetrized product Sa^{1/2} Sb Sa^{1/2}, whose
// eigenvalues equal those of Sa Sb but stay real under a symmetric eigensolve.
inline double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
    if (a.mean.size() != b.mean.size())
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(a.cov);
    if (es_a.info() != Eigen::Success)
        throw std::runtime_error("frechet_distance: eigensolve failed on cov A");
    Eigen::VectorXd ev_a = es_a.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd sqrt_a = es_a.eigenvectors() * ev_a.cwiseSqrt().asDiagonal() *
                             es_a.eigenvectors().transpose();
    Eigen::MatrixXd m = sqrt_a * b.cov * sqrt_a;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(m);
    if (es_m.info() != Eigen::Success)
        throw std::runtime_error("frechet_distance: eigensolve failed on product");
    double cross = 0.0;
    // relative scale for the negative-eigenvalue fault tolerance
    double scale = std::max(1.0, es_m.eigenvalues().cwiseAbs().maxCoeff());
    for (int i = 0; i < es_m.eigenvalues().size(); ++i) {
        double ev = es_m.eigenvalues()(i);
        if (ev < -1e-8 * scale)
            throw std::runtime_error("frechet_distance: product matrix eigenvalue " +
                                     std::to_string(ev) + " below tolerance");
        cross += std::sqrt(std::max(ev, 0.0));
    }
    double mean_term = (a.mean - b.mean).squaredNorm();
    double fd = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    return std::max(fd, 0.0);
}

// A case's bag of embeddings with its ground-truth label.
struct CaseSet {
    std::string case_id;
    ClassLabel class_label = ClassLabel::A;
    std::vector<Tensor> embeddings;
};

inline double case_fd(const CaseSet& translated, const CaseSet& reference) {
    if (translated.case_id != reference.case_id)
        throw std::invalid_argument("case_fd: case ids differ (" + translated.case_id +
                                    " vs " + reference.case_id + ")");
    return frechet_distance(fit_stats(translated.embeddings),
                            fit_stats(reference.embeddings));
}

// Dataset-level CaseFD: arithmetic mean over cases matched by id.
inline double mean_case_fd(const std::vector<CaseSet>& translated,
                           const std::vector<CaseSet>& reference) {
    if (translated.size() != reference.size() || translated.empty())
        throw std::invalid_argument("mean_case_fd: case count mismatch");
    double total = 0.0;
    for (size_t i = 0; i < translated.size(); ++i)
        total += case_fd(translated[i], reference[i]);
    return total / double(translated.size());
}

}  // namespace f2f
