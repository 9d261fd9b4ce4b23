#include <catch2/catch_amalgamated.hpp>

#include "f2f/denoiser.hpp"
#include "f2f/vae.hpp"

using namespace f2f;

namespace {
ImagePatch make_patch(Rng& rng, int64_t size) {
    ImagePatch p;
    p.pixels = Tensor({3, size, size});
    for (float& v : p.pixels.data) v = rng.uniform();
    p.domain = Domain::FS;
    p.case_id = "case_000";
    p.patch_id = "patch_000";
    return p;
}
}  // namespace

TEST_CASE("vae encode produces f=4 c=4 latents") {
    Rng rng(1);
    Vae vae(rng);
    ImagePatch p = make_patch(rng, 16);
    LatentGrid z = vae.encode(p);
    REQUIRE(z.values.shape == std::vector<int64_t>{4, 4, 4});
    REQUIRE(z.timestep == 0);
    REQUIRE(z.values.all_finite());
}

TEST_CASE("vae decode is bounded to [0,1] even for extreme latents") {
    Rng rng(2);
    Vae vae(rng);
    LatentGrid z{Tensor({4, 4, 4}), 0};
    for (int64_t i = 0; i < z.values.numel(); ++i)
        z.values[i] = (i % 2 == 0) ? 1e3f : -1e3f;
    Tensor out = vae.decode(z);
    REQUIRE(out.shape == std::vector<int64_t>{3, 16, 16});
    for (float v : out.data) REQUIRE((v >= 0.f && v <= 1.f));
}

TEST_CASE("vae encode is deterministic and rejects bad inputs") {
    Rng rng(3);
    Vae vae(rng);
    ImagePatch p = make_patch(rng, 16);
    Tensor a = vae.encode(p).values;
    Tensor b = vae.encode(p).values;
    REQUIRE(a.data == b.data);

    ImagePatch bad = p;
    bad.pixels.at3(0, 0, 0) = 1.5f;
    REQUIRE_THROWS_AS(vae.encode(bad), std::invalid_argument);
    ImagePatch odd = p;
    odd.pixels = Tensor({3, 15, 16}, 0.5f);
    REQUIRE_THROWS_AS(vae.encode(odd), std::invalid_argument);
}

TEST_CASE("vae training reduces reconstruction error") {
    Rng rng(4);
    Vae vae(rng);
    ImagePatch p = make_patch(rng, 16);
    nn::ParamList pl;
    vae.params(pl);
    nn::Adam opt(nn::vars_of(pl), 2e-3f, 0.9f, 0.999f);
    float before = vae.reconstruction_mse(p.pixels);
    for (int i = 0; i < 150; ++i) vae.train_step(p.pixels, rng, opt);
    float after = vae.reconstruction_mse(p.pixels);
    REQUIRE(after < before);
    REQUIRE(after < 0.02f);
}

TEST_CASE("denoiser output matches latent shape and is deterministic") {
    Rng rng(5);
    Denoiser den(128, rng, 8, 100);
    Rng data_rng(6);
    Tensor z = data_rng.normal_tensor({4, 8, 8});
    ConditionBundle cond{DomainToken::FFPE, data_rng.normal_tensor({128})};
    Tensor a = den.predict_noise(z, 50, cond);
    Tensor b = den.predict_noise(z, 50, cond);
    REQUIRE(a.shape == z.shape);
    REQUIRE(a.all_finite());
    REQUIRE(a.data == b.data);
}

TEST_CASE("denoiser distinguishes tokens and embeddings") {
    Rng rng(7);
    Denoiser den(16, rng, 8, 100);
    Rng data_rng(8);
    Tensor z = data_rng.normal_tensor({4, 8, 8});
    Tensor e = data_rng.normal_tensor({16});
    {
        // a fresh denoiser is the identity-to-zero map (zero-init residuals),
        // so take a few training steps before probing conditioning sensitivity
        nn::ParamList params;
        den.params(params);
        nn::Adam opt(nn::vars_of(params), 1e-2f, 0.9f, 0.999f);
        NoiseSchedule sched = make_schedule(100);
        for (int i = 0; i < 5; ++i)
            ldm_train_step(den, LatentGrid{z, 0}, {DomainToken::FFPE, e}, sched, data_rng, opt, 0.f);
    }
    Tensor fs = den.predict_noise(z, 10, {DomainToken::FS, e});
    Tensor ffpe = den.predict_noise(z, 10, {DomainToken::FFPE, e});
    Tensor null_tok = den.predict_noise(z, 10, {DomainToken::Null, e});
    Tensor no_embed = den.predict_noise(z, 10, {DomainToken::FFPE, std::nullopt});
    REQUIRE(fs.data != ffpe.data);
    REQUIRE(ffpe.data != null_tok.data);
    REQUIRE(ffpe.data != no_embed.data);
    REQUIRE_THROWS_AS(den.predict_noise(z, 10, {DomainToken::FFPE, Tensor({8}, 0.f)}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(den.predict_noise(z, 101, {DomainToken::FFPE, e}),
                      std::invalid_argument);
}

TEST_CASE("lora install leaves the denoiser output bitwise unchanged") {
    Rng rng(9);
    Denoiser den(32, rng, 8, 100);
    Rng data_rng(10);
    Tensor z = data_rng.normal_tensor({4, 8, 8});
    ConditionBundle cond{DomainToken::FFPE, data_rng.normal_tensor({32})};
    Tensor before = den.predict_noise(z, 33, cond);
    for (int rank : {1, 4, 8}) {
        // reseeding reproduces 'den'; adapters must not perturb the output
        Rng init_rng(9);
        Denoiser fresh(32, init_rng, 8, 100);
        Rng lora_rng(999 + uint64_t(rank));
        fresh.apply_lora(rank, lora_rng);
        Tensor after = fresh.predict_noise(z, 33, cond);
        REQUIRE(after.data == before.data);
    }
}

TEST_CASE("lora rank above layer min dimension is rejected") {
    Rng rng(11);
    Denoiser den(32, rng, 8, 100);  // cond_proj layers are 128 -> 8
    Rng lora_rng(12);
    REQUIRE_THROWS_AS(den.apply_lora(16, lora_rng), std::invalid_argument);
    nn::Linear lin(8, 4, rng);
    REQUIRE_THROWS_AS(lin.install_lora(5, lora_rng), std::invalid_argument);
    REQUIRE_THROWS_AS(lin.install_lora(0, lora_rng), std::invalid_argument);
}

TEST_CASE("ldm loss oracle: perfect predictor scores zero, zero predictor scores one") {
    NoiseSchedule sched = make_schedule(1000);
    Rng rng(13);
    Tensor z0 = rng.normal_tensor({4, 4, 4});
    ConditionBundle cond{DomainToken::FFPE, std::nullopt};

    for (int i = 0; i < 50; ++i) {
        float loss = ldm_loss_sample(z0, cond, sched, rng, 0.1f,
                                     [](const Tensor&, int, const ConditionBundle&,
                                        const Tensor& eps) { return eps; });
        REQUIRE(loss == 0.f);
    }

    double total = 0;
    int n = 10000;
    for (int i = 0; i < n; ++i)
        total += ldm_loss_sample(z0, cond, sched, rng, 0.1f,
                                 [](const Tensor& z_t, int, const ConditionBundle&,
                                    const Tensor&) { return Tensor(z_t.shape, 0.f); });
    REQUIRE(total / n == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("token dropout replaces roughly p of tokens and keeps the embedding") {
    Rng rng(14);
    ConditionBundle cond{DomainToken::FFPE, Tensor({4}, 1.f)};
    int dropped = 0, n = 20000;
    for (int i = 0; i < n; ++i) {
        ConditionBundle c = apply_token_dropout(cond, 0.1f, rng);
        REQUIRE(c.embedding.has_value());
        if (c.token == DomainToken::Null) ++dropped;
    }
    REQUIRE(double(dropped) / n == Catch::Approx(0.1).margin(0.01));
    ConditionBundle same = apply_token_dropout(cond, 0.f, rng);
    REQUIRE(same.token == DomainToken::FFPE);
}

TEST_CASE("ldm_train_step reduces loss on a fixed sample and validates input") {
    Rng rng(15);
    Denoiser den(16, rng, 8, 50);
    NoiseSchedule sched = make_schedule(50);
    nn::ParamList pl;
    den.params(pl);
    nn::Adam opt(nn::vars_of(pl), 1e-3f, 0.9f, 0.999f, 0.01f);
    LatentGrid z0{rng.normal_tensor({4, 8, 8}), 0};
    ConditionBundle cond{DomainToken::FFPE, rng.normal_tensor({16})};

    LatentGrid noisy = z0;
    noisy.timestep = 5;
    REQUIRE_THROWS_AS(ldm_train_step(den, noisy, cond, sched, rng, opt),
                      std::invalid_argument);

    double early = 0, late = 0;
    for (int i = 0; i < 40; ++i) early += ldm_train_step(den, z0, cond, sched, rng, opt);
    for (int i = 0; i < 360; ++i) {
        float l = ldm_train_step(den, z0, cond, sched, rng, opt);
        if (i >= 320) late += l;
    }
    REQUIRE(late / 40 < early / 40);
}
