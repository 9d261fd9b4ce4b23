#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "f2f/config.hpp"
#include "f2f/denoiser.hpp"
#include "f2f/extractor.hpp"
#include "f2f/synth.hpp"
#include "f2f/translator.hpp"
#include "f2f/vae.hpp"

namespace f2f {

using LogFn = std::function<void(const std::string&)>;
inline void null_log(const std::string&) {}

// In-memory view of the generated corpus, patches loaded lazily per record.
struct Corpus {
    std::string root;
    std::vector<ManifestRecord> manifest;

    static Corpus open(const std::string& root) {
        return Corpus{root, load_manifest(root)};
    }

    std::vector<ManifestRecord> select(const std::string& split, Domain domain) const {
        std::vector<ManifestRecord> out;
        for (const auto& r : manifest)
            if ((split.empty() || r.split == split) && r.domain == domain) out.push_back(r);
        return out;
    }

    ImagePatch load(const ManifestRecord& rec) const { return load_patch(root, rec); }
};

// 3-class classifier on clean train-split FFPE patches; the penultimate
// layer is the embedding used everywhere downstream.
inline FeatureExtractor train_extractor(const Corpus& corpus, const RunConfig& cfg,
                                        const LogFn& log = null_log) {
    Rng rng(derive_seed(cfg.seed, 101));
    FeatureExtractor ex(rng);
    nn::ParamList pl;
    ex.params(pl);
    nn::Adam opt(nn::vars_of(pl), 1e-3f, 0.9f, 0.999f);

    auto records = corpus.select("train", Domain::FFPE);
    if (records.empty()) throw std::runtime_error("train_extractor: no train FFPE patches");
    std::vector<ImagePatch> patches;
    for (const auto& r : records) patches.push_back(corpus.load(r));

    std::vector<size_t> order(patches.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.extractor_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.gen);
        double total = 0;
        for (size_t i : order)
            total += ex.train_step(patches[i].pixels, int(patches[i].class_label), opt);
        log("extractor epoch " + std::to_string(epoch) + " ce=" +
            std::to_string(total / double(patches.size())));
    }
    return ex;
}

// VAE trained on both domains' train patches; latent_scale is calibrated to
// unit per-element standard deviation afterwards.
inline Vae train_vae(const Corpus& corpus, const RunConfig& cfg, const LogFn& log = null_log) {
    Rng rng(derive_seed(cfg.seed, 102));
    Vae vae(rng);
    nn::ParamList pl;
    vae.params(pl);
    nn::Adam opt(nn::vars_of(pl), 1e-3f, 0.9f, 0.999f);

    std::vector<ImagePatch> patches;
    for (Domain d : {Domain::FFPE, Domain::FS})
        for (const auto& r : corpus.select("train", d)) patches.push_back(corpus.load(r));
    if (patches.empty()) throw std::runtime_error("train_vae: no train patches");

    for (int step = 0; step < cfg.vae_steps; ++step) {
        const ImagePatch& p = patches[rng.uniform_int(0, int64_t(patches.size()) - 1)];
        auto [rec, loss] = vae.train_step(p.pixels, rng, opt);
        if (step % 500 == 0)
            log("vae step " + std::to_string(step) + " mse=" + std::to_string(rec));
    }

    // calibrate: latents should be ~unit scale for diffusion
    vae.latent_scale = 1.f;
    double sq = 0;
    int64_t n = 0;
    for (size_t i = 0; i < patches.size(); i += 4) {
        Tensor z = vae.encode(patches[i]).values;
        for (float v : z.data) sq += double(v) * v;
        n += z.numel();
    }
    double std_dev = std::sqrt(sq / double(n));
    vae.latent_scale = std_dev > 1e-6 ? float(1.0 / std_dev) : 1.f;
    log("vae latent_scale=" + std::to_string(vae.latent_scale));
    return vae;
}

namespace train_detail {

struct LatentSample {
    LatentGrid z0;
    ConditionBundle cond;
};

inline std::vector<LatentSample> prepare_latents(const Corpus& corpus, const Vae& vae,
                                                 const FeatureExtractor& ex) {
    std::vector<LatentSample> out;
    for (Domain d : {Domain::FFPE, Domain::FS})
        for (const auto& r : corpus.select("train", d)) {
            ImagePatch p = corpus.load(r);
            LatentSample s;
            s.z0 = vae.encode(p);
            s.cond.token = d == Domain::FS ? DomainToken::FS : DomainToken::FFPE;
            s.cond.embedding = ex.extract(p);
            out.push_back(std::move(s));
        }
    if (out.empty()) throw std::runtime_error("train_ldm: no train patches");
    return out;
}

}  // namespace train_detail

// Base denoiser training on both domains, then a LoRA fine-tuning phase that
// only updates the adapters (base weights frozen).
inline Denoiser train_ldm(const Corpus& corpus, const Vae& vae, const FeatureExtractor& ex,
                          const RunConfig& cfg, const LogFn& log = null_log) {
    Rng rng(derive_seed(cfg.seed, 103));
    NoiseSchedule schedule = make_schedule(cfg.t_train);
    Denoiser den(FeatureExtractor::kEmbedDim, rng, 32, cfg.t_train);
    auto data = train_detail::prepare_latents(corpus, vae, ex);

    {
        nn::ParamList pl;
        den.params(pl);
        nn::Adam opt(nn::vars_of(pl), cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
        double running = 0;
        for (int step = 0; step < cfg.ldm_steps; ++step) {
            const auto& s = data[rng.uniform_int(0, int64_t(data.size()) - 1)];
            running += ldm_train_step(den, s.z0, s.cond, schedule, rng, opt);
            if ((step + 1) % 1000 == 0) {
                log("ldm step " + std::to_string(step + 1) + " loss=" +
                    std::to_string(running / 1000.0));
                running = 0;
            }
        }
    }

    if (cfg.lora_rank > 0) {
        den.apply_lora(cfg.lora_rank, rng);
        std::vector<Var> lora_params;
        for (nn::Linear* l : den.linear_layers()) {
            lora_params.push_back(l->lora->down);
            lora_params.push_back(l->lora->up);
        }
        nn::Adam opt(lora_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
        int steps = cfg.ldm_steps / 4;
        for (int step = 0; step < steps; ++step) {
            const auto& s = data[rng.uniform_int(0, int64_t(data.size()) - 1)];
            ldm_train_step(den, s.z0, s.cond, schedule, rng, opt);
        }
        log("ldm lora fine-tune done (" + std::to_string(steps) + " steps, rank " +
            std::to_string(cfg.lora_rank) + ")");
    }
    return den;
}

// WGAN-GP cycle training on unpaired train-split embedding batches.
inline TranslatorPair train_translator(const Corpus& corpus, const FeatureExtractor& ex,
                                       const RunConfig& cfg, const LogFn& log = null_log) {
    Rng rng(derive_seed(cfg.seed, 104));
    std::vector<Tensor> e_fs, e_ffpe;
    for (const auto& r : corpus.select("train", Domain::FS))
        e_fs.push_back(ex.extract(corpus.load(r)));
    for (const auto& r : corpus.select("train", Domain::FFPE))
        e_ffpe.push_back(ex.extract(corpus.load(r)));
    if (e_fs.empty() || e_ffpe.empty())
        throw std::runtime_error("train_translator: missing train embeddings");

    int64_t d = e_fs[0].numel();
    TranslatorPair pair(d, rng, 1e-4f);
    const int64_t batch = 16;
    auto sample_batch = [&](const std::vector<Tensor>& pool) {
        Tensor b({batch, d});
        for (int64_t i = 0; i < batch; ++i) {
            const Tensor& e = pool[size_t(rng.uniform_int(0, int64_t(pool.size()) - 1))];
            for (int64_t j = 0; j < d; ++j) b.at2(i, j) = e[j];
        }
        return b;
    };
    for (int step = 0; step < cfg.translator_steps; ++step) {
        TranslatorLosses l =
            translator_train_step(pair, sample_batch(e_fs), sample_batch(e_ffpe), rng);
        if ((step + 1) % 200 == 0)
            log("translator step " + std::to_string(step + 1) + " cycle=" +
                std::to_string(l.cycle) + " adv=" + std::to_string(l.gen_adv));
    }
    return pair;
}

}  // namespace f2f
