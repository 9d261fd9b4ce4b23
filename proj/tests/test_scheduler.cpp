#include <catch2/catch_amalgamated.hpp>

#include "f2f/rng.hpp"
#include "f2f/schedule.hpp"

using namespace f2f;

TEST_CASE("make_schedule invariants") {
    NoiseSchedule s = make_schedule(1000);
    REQUIRE_THAT(s.alpha_bar(1), Catch::Matchers::WithinAbs(0.9999, 1e-12));
    REQUIRE(s.alpha_bar(1) > 0.99);
    for (int t = 1; t <= 1000; ++t) {
        REQUIRE(s.betas[size_t(t)] > 0.0);
        REQUIRE(s.betas[size_t(t)] < 1.0);
        REQUIRE(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
    REQUIRE(s.alpha_bar(1000) < 0.01);
    REQUIRE(s.alpha_bar(0) == 1.0);
    REQUIRE_THROWS_AS(make_schedule(1), std::invalid_argument);
}

TEST_CASE("ddim_step recovers z0 when fed the true noise") {
    NoiseSchedule s = make_schedule(1000);
    Rng rng(5);
    Tensor z0 = rng.normal_tensor({4, 8, 8});
    Tensor eps = rng.normal_tensor({4, 8, 8});
    int t = 640;
    double sq = std::sqrt(s.alpha_bar(t)), sq1 = std::sqrt(1.0 - s.alpha_bar(t));
    Tensor zt(z0.shape);
    for (int64_t i = 0; i < z0.numel(); ++i)
        zt[i] = float(sq * z0[i] + sq1 * eps[i]);
    Tensor rec = ddim_step(zt, eps, t, 0, s);
    for (int64_t i = 0; i < z0.numel(); ++i)
        REQUIRE_THAT(rec[i], Catch::Matchers::WithinAbs(z0[i], 1e-5));
}

TEST_CASE("ddim_step with t_prev == t is the identity") {
    NoiseSchedule s = make_schedule(1000);
    Rng rng(6);
    Tensor zt = rng.normal_tensor({2, 4, 4});
    Tensor eps = rng.normal_tensor({2, 4, 4});
    Tensor out = ddim_step(zt, eps, 300, 300, s);
    for (int64_t i = 0; i < zt.numel(); ++i)
        REQUIRE_THAT(out[i], Catch::Matchers::WithinAbs(zt[i], 1e-6));
}

TEST_CASE("ddim subdivision is exact under a constant-noise oracle") {
    // with eps constant in t, the DDIM map is exactly transitive, so two
    // half-steps equal one full step
    NoiseSchedule s = make_schedule(1000);
    Rng rng(7);
    Tensor zt = rng.normal_tensor({4, 4, 4});
    Tensor eps = rng.normal_tensor({4, 4, 4});
    Tensor full = ddim_step(zt, eps, 800, 200, s);
    Tensor half = ddim_step(ddim_step(zt, eps, 800, 500, s), eps, 500, 200, s);
    for (int64_t i = 0; i < zt.numel(); ++i)
        REQUIRE_THAT(half[i], Catch::Matchers::WithinAbs(full[i], 1e-5));
}

TEST_CASE("prox_l0 threshold rule") {
    Tensor d({3});
    d[0] = 3.f; d[1] = -0.1f; d[2] = 0.5f;
    Tensor out = prox_l0(d, 0.5f);  // threshold sqrt(1) = 1
    REQUIRE(out[0] == 3.f);
    REQUIRE(out[1] == 0.f);
    REQUIRE(out[2] == 0.f);
    REQUIRE_THROWS_AS(prox_l0(d, -1.f), std::invalid_argument);
}

TEST_CASE("prox_l0 lambda=0 keeps nonzero entries, zeros stay zero") {
    Tensor d({4});
    d[0] = -2.f; d[1] = 0.f; d[2] = 1e-6f; d[3] = 5.f;
    Tensor out = prox_l0(d, 0.f);
    REQUIRE(out[0] == -2.f);
    REQUIRE(out[1] == 0.f);
    REQUIRE(out[2] == 1e-6f);
    REQUIRE(out[3] == 5.f);
}

TEST_CASE("prox_l0 idempotence, oddness and magnitude monotonicity") {
    Rng rng(11);
    Tensor d = rng.normal_tensor({1000});
    float lambda = 0.3f;
    Tensor once = prox_l0(d, lambda);
    Tensor twice = prox_l0(once, lambda);
    REQUIRE(once.data == twice.data);

    Tensor neg = d * -1.f;
    Tensor pneg = prox_l0(neg, lambda);
    for (int64_t i = 0; i < d.numel(); ++i) REQUIRE(pneg[i] == -once[i]);

    // if b survives and |a| >= |b|, a survives
    float thr = std::sqrt(2.f * lambda);
    for (int64_t i = 0; i < d.numel(); ++i)
        if (once[i] != 0.f) REQUIRE(std::abs(d[i]) > thr);
}

TEST_CASE("quantile_lambda hand-computed grid") {
    // |d| on the grid {0.01, ..., 1.00}: the 70% quantile is 0.70
    Tensor d({100});
    for (int i = 0; i < 100; ++i) d[i] = 0.01f * float(i + 1);
    float thr = abs_quantile(d, 0.7f);
    REQUIRE_THAT(thr, Catch::Matchers::WithinAbs(0.70f, 1e-6));
    REQUIRE_THAT(quantile_lambda(d, 0.7f), Catch::Matchers::WithinAbs(0.245f, 1e-6));
}

TEST_CASE("quantile_lambda tie case zeroes everything") {
    Tensor d({50}, 0.37f);
    float lambda = quantile_lambda(d, 0.7f);
    Tensor out = prox_l0(d, lambda);
    for (float v : out.data) REQUIRE(v == 0.f);
}

TEST_CASE("quantile_lambda q near 1 zeroes everything") {
    Rng rng(13);
    Tensor d = rng.uniform_tensor({10}, 0.1f, 1.f);
    // tie the two largest magnitudes so the interpolated quantile at q -> 1
    // equals max|d| exactly
    std::sort(d.data.begin(), d.data.end());
    d.data[8] = d.data[9];
    float lambda = quantile_lambda(d, 1.f - 1e-6f);
    Tensor out = prox_l0(d, lambda);
    for (float v : out.data) REQUIRE(v == 0.f);
    REQUIRE_THROWS_AS(quantile_lambda(Tensor({0}), 0.7f), std::invalid_argument);
}

TEST_CASE("quantile-derived prox zeroes the expected fraction") {
    Rng rng(17);
    Tensor d = rng.normal_tensor({100000});
    float lambda = quantile_lambda(d, 0.7f);
    Tensor out = prox_l0(d, lambda);
    int64_t zeros = 0;
    for (float v : out.data)
        if (v == 0.f) ++zeros;
    double frac = double(zeros) / double(d.numel());
    REQUIRE(frac >= 0.69);
    REQUIRE(frac <= 0.71);
}

namespace {

// stub predictor: conditional branch returns base+delta, null branch base
NoisePredictor stub_predictor(const Tensor& base, const Tensor& delta) {
    return [base, delta](const Tensor& z, int, const ConditionBundle& cond) {
        (void)z;
        if (cond.token == DomainToken::Null) return base;
        return base + delta;
    };
}

}  // namespace

TEST_CASE("guided_noise identities on a stub model") {
    Rng rng(19);
    Tensor z = rng.normal_tensor({4});
    Tensor base = rng.normal_tensor({4});
    Tensor delta = rng.normal_tensor({4});
    Tensor emb = rng.normal_tensor({8});
    ConditionBundle c_ffpe{DomainToken::FFPE, emb};
    ConditionBundle c_null{DomainToken::Null, emb};
    auto pred = stub_predictor(base, delta);

    GuidanceConfig cfg;
    cfg.prox_enabled = false;
    cfg.guidance_scale = 1.f;
    Tensor out = guided_noise(z, 10, c_ffpe, c_null, cfg, pred);
    Tensor eps_c = base + delta;
    REQUIRE(out.data == eps_c.data);

    cfg.guidance_scale = 0.f;
    out = guided_noise(z, 10, c_ffpe, c_null, cfg, pred);
    REQUIRE(out.data == base.data);
}

TEST_CASE("guided_noise with prox matches scalar hand computation") {
    // 4-element stub: d = [0.9, -0.05, 0.2, -0.8]; q=0.7 on |d| sorted
    // {0.05,0.2,0.8,0.9} -> position 0.7*4-1 = 1.8 -> 0.2+0.8*0.6 = 0.68;
    // lambda = 0.68^2/2; survivors are 0.9 and -0.8
    Tensor base({4});
    base[0] = 0.1f; base[1] = 0.2f; base[2] = 0.3f; base[3] = 0.4f;
    Tensor delta({4});
    delta[0] = 0.9f; delta[1] = -0.05f; delta[2] = 0.2f; delta[3] = -0.8f;
    Tensor emb({2}, 1.f);
    ConditionBundle c_ffpe{DomainToken::FFPE, emb};
    ConditionBundle c_null{DomainToken::Null, emb};
    GuidanceConfig cfg;
    cfg.prox_enabled = true;
    cfg.quantile = 0.7f;
    cfg.guidance_scale = 12.f;
    Tensor z({4}, 0.f);
    Tensor out = guided_noise(z, 1, c_ffpe, c_null, cfg, stub_predictor(base, delta));
    REQUIRE_THAT(out[0], Catch::Matchers::WithinAbs(0.1f + 12.f * 0.9f, 1e-6));
    REQUIRE_THAT(out[1], Catch::Matchers::WithinAbs(0.2f, 1e-6));
    REQUIRE_THAT(out[2], Catch::Matchers::WithinAbs(0.3f, 1e-6));
    REQUIRE_THAT(out[3], Catch::Matchers::WithinAbs(0.4f - 12.f * 0.8f, 1e-6));
}

TEST_CASE("guided_noise rejects mismatched embeddings") {
    Tensor base({2}, 0.f), delta({2}, 1.f), z({2}, 0.f);
    Tensor e1({2}, 1.f), e2({2}, 2.f);
    ConditionBundle c_ffpe{DomainToken::FFPE, e1};
    ConditionBundle c_null{DomainToken::Null, e2};
    GuidanceConfig cfg;
    REQUIRE_THROWS_AS(
        guided_noise(z, 1, c_ffpe, c_null, cfg, stub_predictor(base, delta)),
        std::invalid_argument);
}

TEST_CASE("ddim_invert with S=0 returns the input unchanged") {
    NoiseSchedule s = make_schedule(1000);
    Rng rng(23);
    LatentGrid z0{rng.normal_tensor({4, 4, 4}), 0};
    GuidanceConfig cfg;
    cfg.strength = 0.f;
    ConditionBundle cond{DomainToken::FS, rng.normal_tensor({8})};
    auto pred = [](const Tensor& z, int, const ConditionBundle&) { return z; };
    InversionResult res = ddim_invert(z0, cond, cfg, s, pred);
    REQUIRE(res.latent.values.data == z0.values.data);
    REQUIRE(res.latent.timestep == 0);
    REQUIRE(res.grid == std::vector<int>{0});
}

TEST_CASE("invert then denoise with a constant-noise oracle reconstructs exactly") {
    // constant predictor makes DDIM exactly invertible regardless of grid
    NoiseSchedule s = make_schedule(1000);
    Rng rng(29);
    Tensor eps = rng.normal_tensor({4, 4, 4});
    auto pred = [eps](const Tensor&, int, const ConditionBundle&) { return eps; };
    LatentGrid z0{rng.normal_tensor({4, 4, 4}), 0};
    Tensor emb = rng.normal_tensor({8});
    GuidanceConfig cfg;
    cfg.strength = 0.5f;
    cfg.guidance_scale = 1.f;
    cfg.prox_enabled = false;
    ConditionBundle cond_fs{DomainToken::FS, emb};
    InversionResult inv = ddim_invert(z0, cond_fs, cfg, s, pred);
    REQUIRE(inv.grid.size() == 26);  // 25 steps + leading zero
    REQUIRE(inv.latent.timestep == inv.grid.back());
    ConditionBundle cond_ffpe{DomainToken::FFPE, emb};
    LatentGrid rec = denoise(inv.latent, inv.grid, cond_ffpe, cfg, s, pred);
    for (int64_t i = 0; i < z0.values.numel(); ++i)
        REQUIRE_THAT(rec.values[i], Catch::Matchers::WithinAbs(z0.values[i], 1e-4));
}

TEST_CASE("denoise rejects a grid that does not match the config") {
    NoiseSchedule s = make_schedule(1000);
    Rng rng(31);
    GuidanceConfig cfg;
    cfg.strength = 0.5f;
    ConditionBundle cond{DomainToken::FFPE, rng.normal_tensor({8})};
    LatentGrid z{rng.normal_tensor({2, 2, 2}), 500};
    std::vector<int> bad_grid{0, 100, 500};
    auto pred = [](const Tensor& z2, int, const ConditionBundle&) { return z2; };
    REQUIRE_THROWS_AS(denoise(z, bad_grid, cond, cfg, s, pred), std::invalid_argument);
}
