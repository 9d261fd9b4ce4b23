#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "f2f/checkpoint.hpp"
#include "f2f/eval.hpp"
#include "f2f/pipeline.hpp"
#include "f2f/plot.hpp"
#include "f2f/train.hpp"

namespace f2f {

struct CommandContext {
    RunConfig cfg;
    bool force = false;
    LogFn log = null_log;
};

namespace cmd_detail {

inline void write_snapshot(const std::string& dir, const RunConfig& cfg) {
    std::filesystem::create_directories(dir);
    save_config((std::filesystem::path(dir) / "config.resolved.json").string(), cfg);
}

inline bool exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace cmd_detail

// ---- checkpoint glue -------------------------------------------------------

inline void save_extractor(const std::string& path, const FeatureExtractor& ex) {
    nn::ParamList pl;
    ex.params(pl);
    save_params(path, pl, {{"kind", "extractor"}, {"dim", FeatureExtractor::kEmbedDim}});
}

inline FeatureExtractor load_extractor(const std::string& path) {
    Rng rng(0);
    FeatureExtractor ex(rng);
    nn::ParamList pl;
    ex.params(pl);
    load_params(path, pl);
    return ex;
}

inline void save_vae(const std::string& path, const Vae& vae) {
    nn::ParamList pl;
    vae.params(pl);
    save_params(path, pl, {{"kind", "vae"}, {"latent_scale", vae.latent_scale},
                           {"f", Vae::kDownsample}, {"c", Vae::kLatentChannels}});
}

inline Vae load_vae(const std::string& path) {
    Rng rng(0);
    Vae vae(rng);
    nn::ParamList pl;
    vae.params(pl);
    load_params(path, pl);
    vae.latent_scale = load_metadata(path).at("latent_scale").get<float>();
    return vae;
}

inline void save_ldm(const std::string& path, const Denoiser& den, const RunConfig& cfg) {
    nn::ParamList pl;
    den.params(pl);
    save_params(path, pl,
                {{"kind", "denoiser"}, {"t_train", den.t_train},
                 {"embed_dim", den.embed_dim}, {"lora_rank", den.lora_rank},
                 {"seed", cfg.seed}});
}

inline Denoiser load_ldm(const std::string& path) {
    nlohmann::json meta = load_metadata(path);
    Rng rng(0);
    Denoiser den(meta.at("embed_dim").get<int64_t>(), rng, 32,
                 meta.at("t_train").get<int>());
    int rank = meta.at("lora_rank").get<int>();
    if (rank > 0) den.apply_lora(rank, rng);
    nn::ParamList pl;
    den.params(pl);
    load_params(path, pl);
    return den;
}

inline void save_translator(const std::string& path, const TranslatorPair& pair) {
    nn::ParamList pl;
    pair.params(pl);
    save_params(path, pl, {{"kind", "translator"}, {"dim", pair.dim()}});
}

inline TranslatorPair load_translator(const std::string& path) {
    nlohmann::json meta = load_metadata(path);
    Rng rng(0);
    TranslatorPair pair(meta.at("dim").get<int64_t>(), rng);
    nn::ParamList pl;
    pair.params(pl);
    load_params(path, pl);
    return pair;
}

// ---- commands --------------------------------------------------------------

inline void cmd_synth(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    std::string manifest = (std::filesystem::path(cfg.data_root) / "manifest.jsonl").string();
    if (cmd_detail::exists(manifest) && !ctx.force) {
        ctx.log("synth: " + manifest + " exists; skipping (use --force to regenerate)");
        return;
    }
    DatasetConfig dc;
    dc.n_cases = cfg.n_cases;
    dc.patches_per_case = cfg.patches_per_case;
    dc.patch_size = cfg.patch_size;
    dc.seed = cfg.seed;
    generate_dataset(cfg.data_root, dc);
    cmd_detail::write_snapshot(cfg.data_root, cfg);
    ctx.log("synth: wrote " + std::to_string(cfg.n_cases * cfg.patches_per_case * 2) +
            " patches under " + cfg.data_root);
}

// Trains extractor, VAE and denoiser; each checkpoint is skipped when it
// already exists (resumable-safe).
inline void cmd_train_ldm(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    Corpus corpus = Corpus::open(cfg.data_root);
    std::string vae_path = cfg.ldm_checkpoint + ".vae";

    std::filesystem::create_directories(
        std::filesystem::path(cfg.ldm_checkpoint).parent_path().string().empty()
            ? "."
            : std::filesystem::path(cfg.ldm_checkpoint).parent_path().string());

    if (!cmd_detail::exists(cfg.extractor_checkpoint) || ctx.force) {
        FeatureExtractor ex = train_extractor(corpus, cfg, ctx.log);
        save_extractor(cfg.extractor_checkpoint, ex);
    } else {
        ctx.log("train-ldm: extractor checkpoint exists; skipping");
    }
    FeatureExtractor ex = load_extractor(cfg.extractor_checkpoint);

    if (!cmd_detail::exists(vae_path) || ctx.force) {
        Vae vae = train_vae(corpus, cfg, ctx.log);
        save_vae(vae_path, vae);
    } else {
        ctx.log("train-ldm: vae checkpoint exists; skipping");
    }
    Vae vae = load_vae(vae_path);

    if (!cmd_detail::exists(cfg.ldm_checkpoint) || ctx.force) {
        Denoiser den = train_ldm(corpus, vae, ex, cfg, ctx.log);
        save_ldm(cfg.ldm_checkpoint, den, cfg);
    } else {
        ctx.log("train-ldm: denoiser checkpoint exists; skipping");
    }
    cmd_detail::write_snapshot(cfg.output_root, cfg);
}

inline void cmd_train_translator(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    if (!cmd_detail::exists(cfg.extractor_checkpoint))
        throw std::runtime_error("train-translator: missing extractor checkpoint " +
                                 cfg.extractor_checkpoint + " (run train-ldm first)");
    if (cmd_detail::exists(cfg.translator_checkpoint) && !ctx.force) {
        ctx.log("train-translator: checkpoint exists; skipping");
        return;
    }
    Corpus corpus = Corpus::open(cfg.data_root);
    FeatureExtractor ex = load_extractor(cfg.extractor_checkpoint);
    TranslatorPair pair = train_translator(corpus, ex, cfg, ctx.log);
    save_translator(cfg.translator_checkpoint, pair);
    cmd_detail::write_snapshot(cfg.output_root, cfg);
}

// FS records selected for translation/eval: every case, first
// eval_patches_per_case patches (deterministic manifest order).
inline std::vector<ManifestRecord> eval_fs_records(const Corpus& corpus,
                                                   const RunConfig& cfg) {
    std::map<std::string, int> counts;
    std::vector<ManifestRecord> out;
    for (const auto& r : corpus.select("", Domain::FS)) {
        if (counts[r.case_id] >= cfg.eval_patches_per_case) continue;
        ++counts[r.case_id];
        out.push_back(r);
    }
    return out;
}

// Translates the eval FS subset into <output_root>/translated with mirrored
// relative paths, plus per-patch JSONL records.
inline void cmd_translate(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    std::filesystem::path out_dir = std::filesystem::path(cfg.output_root) / "translated";
    std::string records_path = (out_dir / "records.jsonl").string();
    if (cmd_detail::exists(records_path) && !ctx.force) {
        ctx.log("translate: " + records_path + " exists; skipping");
        return;
    }

    Corpus corpus = Corpus::open(cfg.data_root);
    Vae vae = load_vae(cfg.ldm_checkpoint + ".vae");
    FeatureExtractor ex = load_extractor(cfg.extractor_checkpoint);
    Denoiser den = load_ldm(cfg.ldm_checkpoint);
    TranslatorPair pair = load_translator(cfg.translator_checkpoint);

    TranslationJob job;
    job.vae = &vae;
    job.extractor = &ex;
    job.generator = &pair.g;
    job.predict = den.predictor();
    job.guidance = cfg.guidance();
    job.schedule = make_schedule(cfg.t_train);
    job.alpha = cfg.alpha;

    std::filesystem::create_directories(out_dir);
    std::ofstream records(records_path + ".tmp");
    int done = 0;
    for (const auto& rec : eval_fs_records(corpus, cfg)) {
        ImagePatch p = corpus.load(rec);
        TranslationTrace trace;
        Tensor out = translate_patch(p, job, &trace);
        std::filesystem::path dst = out_dir / rec.path;
        std::filesystem::create_directories(dst.parent_path());
        save_png(dst.string(), out);
        nlohmann::json j{{"path", rec.path},
                         {"case_id", rec.case_id},
                         {"seed", cfg.seed},
                         {"z0_norm", trace.z0_norm},
                         {"zS_norm", trace.zT_norm},
                         {"e_hat_norm", trace.e_hat.l2_norm()}};
        records << j.dump() << "\n";
        if (++done % 50 == 0) ctx.log("translate: " + std::to_string(done) + " patches");
    }
    records.close();
    std::filesystem::rename(records_path + ".tmp", records_path);
    cmd_detail::write_snapshot(cfg.output_root, cfg);
    ctx.log("translate: " + std::to_string(done) + " patches -> " + out_dir.string());
}

// MIL + CaseFD over three conditions: FFPE reference, raw FS, translated FS.
inline EvalResult cmd_eval(const CommandContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    Corpus corpus = Corpus::open(cfg.data_root);
    FeatureExtractor ex = load_extractor(cfg.extractor_checkpoint);
    std::string translated_root =
        (std::filesystem::path(cfg.output_root) / "translated").string();

    std::vector<CaseSet> ffpe = build_case_sets(corpus.select("", Domain::FFPE),
                                                cfg.data_root, ex,
                                                cfg.eval_patches_per_case);
    std::vector<ManifestRecord> fs_records = eval_fs_records(corpus, cfg);
    std::vector<CaseSet> fs_raw = build_case_sets(fs_records, cfg.data_root, ex);
    std::vector<CaseSet> translated = build_case_sets(fs_records, translated_root, ex);

    EvalResult result = evaluate_conditions(
        ffpe, {{"fs", fs_raw}, {"translated", translated}}, cfg);
    std::filesystem::create_directories(cfg.output_root);
    write_metrics_csv((std::filesystem::path(cfg.output_root) / "metrics.csv").string(),
                      result);
    write_metrics_json((std::filesystem::path(cfg.output_root) / "metrics.json").string(),
                       result);
    cmd_detail::write_snapshot(cfg.output_root, cfg);
    for (const auto& r : result.rows)
        ctx.log("eval: " + r.name + " auc=" + std::to_string(r.macro_auc) + " acc=" +
                std::to_string(r.accuracy) + " case_fd=" + std::to_string(r.case_fd));
    return result;
}

// ---- sweep -----------------------------------------------------------------

struct SweepPoint {
    double value = 0;
    bool ok = false;
    std::string error;
    ConditionMetrics translated;
};

inline RunConfig apply_axis(const RunConfig& base, const std::string& axis, double v) {
    RunConfig c = base;
    if (axis == "S") c.strength = float(v);
    else if (axis == "GS") c.guidance_gs = float(v);
    else if (axis == "alpha") c.alpha = float(v);
    else if (axis == "lora_rank") c.lora_rank = int(v);
    else if (axis == "prox") c.prox_enabled = v != 0.0;
    else throw std::invalid_argument("sweep: unknown axis '" + axis + "'");
    return c;
}

// Runs translate+eval per value into per-point directories; emits sweep.csv
// and one line plot per metric. lora_rank points retrain the adapters (the
// checkpoint is rank-specific); other axes reuse the trained checkpoints.
inline std::vector<SweepPoint> cmd_sweep(const CommandContext& ctx, const std::string& axis,
                                         const std::vector<double>& values) {
    std::vector<SweepPoint> points;
    for (double v : values) {
        SweepPoint pt;
        pt.value = v;
        try {
            CommandContext sub = ctx;
            sub.cfg = apply_axis(ctx.cfg, axis, v);
            char tag[64];
            std::snprintf(tag, sizeof(tag), "%s_%g", axis.c_str(), v);
            sub.cfg.output_root =
                (std::filesystem::path(ctx.cfg.output_root) / "sweep" / tag).string();
            if (axis == "lora_rank") {
                sub.cfg.ldm_checkpoint =
                    (std::filesystem::path(sub.cfg.output_root) / "ldm.f2ft").string();
                // reuse the already-trained VAE so only the denoiser differs
                std::filesystem::create_directories(sub.cfg.output_root);
                std::string base_vae = ctx.cfg.ldm_checkpoint + ".vae";
                if (cmd_detail::exists(base_vae)) {
                    std::filesystem::copy_file(
                        base_vae, sub.cfg.ldm_checkpoint + ".vae",
                        std::filesystem::copy_options::overwrite_existing);
                    std::filesystem::copy_file(
                        base_vae + ".json", sub.cfg.ldm_checkpoint + ".vae.json",
                        std::filesystem::copy_options::overwrite_existing);
                }
                cmd_train_ldm(sub);
            }
            cmd_translate(sub);
            EvalResult res = cmd_eval(sub);
            pt.translated = res.row("translated");
            pt.ok = true;
        } catch (const std::exception& e) {
            pt.error = e.what();
            ctx.log("sweep: point " + std::to_string(v) + " failed: " + pt.error);
        }
        points.push_back(std::move(pt));
    }

    std::filesystem::path sweep_dir = std::filesystem::path(ctx.cfg.output_root) / "sweep";
    std::filesystem::create_directories(sweep_dir);
    {
        std::ofstream os(sweep_dir / (axis + ".csv"));
        os << axis << ",macro_auc,accuracy,case_fd_toy_conv,status\n";
        char buf[256];
        for (const auto& p : points) {
            if (p.ok)
                std::snprintf(buf, sizeof(buf), "%g,%.6f,%.6f,%.6f,ok\n", p.value,
                              p.translated.macro_auc, p.translated.accuracy,
                              p.translated.case_fd);
            else
                std::snprintf(buf, sizeof(buf), "%g,,,,failed\n", p.value);
            os << buf;
        }
    }
    std::vector<double> xs, auc, fd, acc;
    for (const auto& p : points)
        if (p.ok) {
            xs.push_back(p.value);
            auc.push_back(p.translated.macro_auc);
            acc.push_back(p.translated.accuracy);
            fd.push_back(p.translated.case_fd);
        }
    if (xs.size() >= 2) {
        save_line_plot((sweep_dir / (axis + "_auc.png")).string(), xs, auc);
        save_line_plot((sweep_dir / (axis + "_acc.png")).string(), xs, acc);
        save_line_plot((sweep_dir / (axis + "_case_fd.png")).string(), xs, fd);
    }
    return points;
}

}  // namespace f2f
