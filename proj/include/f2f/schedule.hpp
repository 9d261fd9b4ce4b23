#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "f2f/types.hpp"

namespace f2f {

// Linear-beta DDPM schedule. Arrays are indexed by timestep with the
// convention alphas_bar[0] = 1 (clean latent), so DDIM formulas can use any
// pair of grid nodes including t = 0.
struct NoiseSchedule {
    int t_train = 1000;
    std::vector<double> betas;       // betas[0] unused
    std::vector<double> alphas_bar;  // alphas_bar[t], t in [0, t_train]

    double alpha_bar(int t) const {
        if (t < 0 || t > t_train) throw std::out_of_range("timestep out of schedule range");
        return alphas_bar[static_cast<size_t>(t)];
    }
};

inline NoiseSchedule make_schedule(int t_train) {
    if (t_train < 2) throw std::invalid_argument("t_train must be >= 2");
    NoiseSchedule s;
    s.t_train = t_train;
    s.betas.assign(static_cast<size_t>(t_train) + 1, 0.0);
    s.alphas_bar.assign(static_cast<size_t>(t_train) + 1, 1.0);
    const double beta_lo = 1e-4, beta_hi = 2e-2;
    double prod = 1.0;
    for (int t = 1; t <= t_train; ++t) {
        double beta = beta_lo + (beta_hi - beta_lo) * double(t - 1) / double(t_train - 1);
        s.betas[static_cast<size_t>(t)] = beta;
        prod *= 1.0 - beta;
        s.alphas_bar[static_cast<size_t>(t)] = prod;
    }
    return s;
}

struct GuidanceConfig {
    float guidance_scale = 4.0f;
    float strength = 0.7f;
    int t_inference = 50;
    bool prox_enabled = false;
    float quantile = 0.7f;
    // When true, the quantile value is read as lambda itself rather than as
    // the threshold (the alternative reading of the quantile rule).
    bool lambda_is_quantile = false;

    int inversion_steps() const {
        return static_cast<int>(std::lround(double(strength) * t_inference));
    }
};

// Uniform inference grid over [0, t_train], leading zero included:
// grid[i] = round(i * t_train / t_inference), i = 0..t_inference.
inline std::vector<int> inference_grid(const NoiseSchedule& schedule, int t_inference) {
    if (t_inference < 1) throw std::invalid_argument("t_inference must be >= 1");
    std::vector<int> grid(static_cast<size_t>(t_inference) + 1);
    for (int i = 0; i <= t_inference; ++i)
        grid[static_cast<size_t>(i)] =
            static_cast<int>(std::lround(double(i) * schedule.t_train / t_inference));
    return grid;
}

// One deterministic DDIM update from node t to node t_prev (eta = 0). The
// same algebra runs both directions; inversion calls it with t_prev > t.
inline Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                        const NoiseSchedule& schedule) {
    if (!z_t.same_shape(eps_hat)) throw std::invalid_argument("ddim_step shape mismatch");
    if (!z_t.all_finite() || !eps_hat.all_finite())
        throw std::runtime_error("ddim_step: non-finite input");
    double ab_t = schedule.alpha_bar(t);
    double ab_p = schedule.alpha_bar(t_prev);
    double sq_t = std::sqrt(ab_t), sq1_t = std::sqrt(1.0 - ab_t);
    double sq_p = std::sqrt(ab_p), sq1_p = std::sqrt(1.0 - ab_p);
    Tensor out(z_t.shape);
    for (int64_t i = 0; i < z_t.numel(); ++i) {
        double z0 = (double(z_t[i]) - sq1_t * eps_hat[i]) / sq_t;
        out[i] = static_cast<float>(sq_p * z0 + sq1_p * eps_hat[i]);
    }
    return out;
}

// prox_lambda(d): keep entries with |d| > sqrt(2*lambda), zero the rest.
inline Tensor prox_l0(const Tensor& d, float lambda) {
    if (lambda < 0.f) throw std::invalid_argument("prox_l0: negative lambda");
    float thr = std::sqrt(2.f * lambda);
    Tensor out = d;
    for (float& v : out.data)
        if (!(std::abs(v) > thr)) v = 0.f;
    return out;
}

// q-quantile of |d| with linear interpolation between order statistics.
inline float abs_quantile(const Tensor& d, float q) {
    if (d.numel() == 0) throw std::invalid_argument("quantile of empty tensor");
    if (!(q > 0.f && q < 1.f)) throw std::invalid_argument("quantile must be in (0,1)");
    std::vector<float> mags(d.data.size());
    for (size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(d.data[i]);
    std::sort(mags.begin(), mags.end());
    // position q*n - 1 so that exactly the top (1-q) fraction lies strictly
    // above the returned value when q*n is integral
    double pos = double(q) * double(mags.size()) - 1.0;
    if (pos <= 0.0) return mags.front();
    size_t lo = static_cast<size_t>(pos);
    double frac = pos - double(lo);
    if (lo + 1 >= mags.size()) return mags.back();
    return static_cast<float>((1.0 - frac) * mags[lo] + frac * mags[lo + 1]);
}

// lambda such that sqrt(2*lambda) equals the q-quantile of |d|, i.e. exactly
// the top (1-q) fraction of magnitudes pass prox_l0.
inline float quantile_lambda(const Tensor& d, float q) {
    float thr = abs_quantile(d, q);
    return 0.5f * thr * thr;
}

using NoisePredictor =
    std::function<Tensor(const Tensor& z, int t, const ConditionBundle& cond)>;

// Classifier-free guidance with the embedding-conditioned unconditional
// branch and optional L0-regularized noise difference:
//   eps = eps_u + GS * prox_lambda(eps_c - eps_u)
inline Tensor guided_noise(const Tensor& z_t, int t, const ConditionBundle& cond_ffpe,
                           const ConditionBundle& cond_null, const GuidanceConfig& cfg,
                           const NoisePredictor& predict) {
    if (cond_ffpe.embedding.has_value() != cond_null.embedding.has_value() ||
        (cond_ffpe.embedding &&
         cond_ffpe.embedding->data != cond_null.embedding->data))
        throw std::invalid_argument("guided_noise: branches must share the same embedding");
    Tensor eps_c = predict(z_t, t, cond_ffpe);
    if (!cfg.prox_enabled && cfg.guidance_scale == 1.f) return eps_c;
    Tensor eps_u = predict(z_t, t, cond_null);
    if (cfg.guidance_scale == 0.f) return eps_u;
    Tensor d = eps_c - eps_u;
    if (cfg.prox_enabled) {
        float lambda = cfg.lambda_is_quantile ? abs_quantile(d, cfg.quantile)
                                              : quantile_lambda(d, cfg.quantile);
        d = prox_l0(d, lambda);
    }
    Tensor out = eps_u;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += cfg.guidance_scale * d[i];
    return out;
}

struct InversionResult {
    LatentGrid latent;       // at grid[steps]
    std::vector<int> grid;   // visited timesteps, grid[0] = 0
};

// DDIM inversion: run the update forward along the inference grid for
// round(S * t_inference) steps under source conditioning, no guidance.
inline InversionResult ddim_invert(const LatentGrid& z_0, const ConditionBundle& cond_fs,
                                   const GuidanceConfig& cfg, const NoiseSchedule& schedule,
                                   const NoisePredictor& predict) {
    std::vector<int> grid = inference_grid(schedule, cfg.t_inference);
    int steps = cfg.inversion_steps();
    Tensor z = z_0.values;
    for (int i = 0; i < steps; ++i) {
        Tensor eps = predict(z, grid[static_cast<size_t>(i)], cond_fs);
        z = ddim_step(z, eps, grid[static_cast<size_t>(i)], grid[static_cast<size_t>(i) + 1],
                      schedule);
        if (!z.all_finite())
            throw std::runtime_error("ddim_invert: non-finite latent at step " +
                                     std::to_string(i));
    }
    grid.resize(static_cast<size_t>(steps) + 1);
    return {LatentGrid{std::move(z), grid.back()}, std::move(grid)};
}

// Reverse pass from the top of `grid` down to t = 0, applying guided noise
// at every step. `grid` must be the grid produced by ddim_invert under the
// same config.
inline LatentGrid denoise(const LatentGrid& z_noisy, const std::vector<int>& grid,
                          const ConditionBundle& cond_ffpe, const GuidanceConfig& cfg,
                          const NoiseSchedule& schedule, const NoisePredictor& predict) {
    std::vector<int> expect = inference_grid(schedule, cfg.t_inference);
    expect.resize(static_cast<size_t>(cfg.inversion_steps()) + 1);
    if (grid != expect)
        throw std::invalid_argument("denoise: timestep grid does not match inversion config");
    if (z_noisy.timestep != grid.back())
        throw std::invalid_argument("denoise: latent timestep does not match grid");
    ConditionBundle cond_null{DomainToken::Null, cond_ffpe.embedding};
    Tensor z = z_noisy.values;
    for (size_t i = grid.size() - 1; i > 0; --i) {
        Tensor eps = guided_noise(z, grid[i], cond_ffpe, cond_null, cfg, predict);
        z = ddim_step(z, eps, grid[i], grid[i - 1], schedule);
        if (!z.all_finite())
            throw std::runtime_error("denoise: non-finite latent at t=" +
                                     std::to_string(grid[i]));
    }
    return LatentGrid{std::move(z), 0};
}

}  // namespace f2f
