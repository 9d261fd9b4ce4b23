#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/denoiser.hpp"
#include "f2f/extractor.hpp"
#include "f2f/rng.hpp"
#include "f2f/schedule.hpp"
#include "f2f/synth.hpp"
#include "f2f/translator.hpp"
#include "f2f/vae.hpp"

namespace f2f {

// Everything needed to run FS -> FFPE translation on one patch.
struct TranslationJob {
    const Vae* vae = nullptr;
    const FeatureExtractor* extractor = nullptr;
    const UStyleFC* generator = nullptr;  // FS -> FFPE embedding map; null = keep e_fs
    NoisePredictor predict;               // denoiser, shared by inversion and sampling
    GuidanceConfig guidance;
    NoiseSchedule schedule;
    float alpha = 0.25f;
};

struct TranslationTrace {
    Tensor e_fs;        // extractor embedding of the FS input
    Tensor e_hat;       // alpha-blended translated embedding
    float z0_norm = 0;  // |encode(x)|
    float zT_norm = 0;  // |latent after inversion|
};

namespace pipeline_detail {
inline void check_stage(const Tensor& t, const char* stage) {
    if (!t.all_finite())
        throw std::runtime_error(std::string("translate_patch: non-finite values after ") +
                                 stage);
}
}  // namespace pipeline_detail

// extract -> encode -> invert under the FS token -> blend embedding ->
// denoise under the FFPE token -> decode. Deterministic given the inputs.
inline Tensor translate_patch(const ImagePatch& fs_patch, const TranslationJob& job,
                              TranslationTrace* trace = nullptr) {
    if (!job.vae || !job.extractor || !job.predict)
        throw std::invalid_argument("translate_patch: job is missing a model");
    if (fs_patch.domain != Domain::FS)
        throw std::invalid_argument("translate_patch: input patch is not FS");

    Tensor e_fs = job.extractor->extract(fs_patch);
    pipeline_detail::check_stage(e_fs, "extract");

    LatentGrid z0 = job.vae->encode(fs_patch);
    pipeline_detail::check_stage(z0.values, "encode");

    GuidanceConfig inv_cfg = job.guidance;
    inv_cfg.guidance_scale = 1.f;  // inversion runs unguided
    inv_cfg.prox_enabled = false;
    ConditionBundle cond_fs{DomainToken::FS, e_fs};
    InversionResult inv = ddim_invert(z0, cond_fs, inv_cfg, job.schedule, job.predict);
    pipeline_detail::check_stage(inv.latent.values, "ddim_invert");

    Tensor e_hat = job.generator ? translate_embedding(e_fs, *job.generator, job.alpha) : e_fs;
    pipeline_detail::check_stage(e_hat, "translate_embedding");

    ConditionBundle cond_ffpe{DomainToken::FFPE, e_hat};
    LatentGrid z_out =
        denoise(inv.latent, inv.grid, cond_ffpe, job.guidance, job.schedule, job.predict);
    pipeline_detail::check_stage(z_out.values, "denoise");

    Tensor pixels = job.vae->decode(z_out);
    pipeline_detail::check_stage(pixels, "decode");

    if (trace) {
        trace->e_fs = e_fs;
        trace->e_hat = e_hat;
        trace->z0_norm = z0.values.l2_norm();
        trace->zT_norm = inv.latent.values.l2_norm();
    }
    return pixels;
}

// Split a large FS image into square tiles, translate each independently,
// and stitch the results back. Tile order does not affect the output.
inline Tensor translate_tiled(const Tensor& fs_image, int64_t tile_size,
                              const TranslationJob& job, const ImagePatch& meta) {
    std::vector<TileRef> tiles = tile(fs_image, tile_size);
    int64_t rows = fs_image.shape[1] / tile_size;
    int64_t cols = fs_image.shape[2] / tile_size;
    for (TileRef& t : tiles) {
        ImagePatch p;
        p.pixels = t.pixels;
        p.domain = Domain::FS;
        p.class_label = meta.class_label;
        p.case_id = meta.case_id;
        p.patch_id = meta.patch_id + "_r" + std::to_string(t.row) + "c" + std::to_string(t.col);
        t.pixels = translate_patch(p, job);
    }
    return reassemble(tiles, rows, cols);
}

}  // namespace f2f
