#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/image_io.hpp"
#include "f2f/rng.hpp"
#include "f2f/types.hpp"

namespace f2f {

// Procedural two-domain corpus: classes differ by blob size / density /
// anisotropy, cases share a texture seed, the FS render adds fold streaks,
// ice holes and a global color shift on *different* patch instances than the
// FFPE render (unpaired training discipline).

struct ArtifactConfig {
    float fold_density = 3.f;        // expected streak count per 64x64 patch
    float streak_width = 2.5f;       // pixels
    float ice_hole_rate = 4.f;       // expected hole count per 64x64 patch
    float hole_radius_min = 3.f;
    float hole_radius_max = 8.f;
    float color_shift_r = -0.10f;
    float color_shift_g = 0.03f;
    float color_shift_b = 0.12f;

    bool is_noop() const {
        return fold_density == 0.f && ice_hole_rate == 0.f && color_shift_r == 0.f &&
               color_shift_g == 0.f && color_shift_b == 0.f;
    }
};

struct CaseSpec {
    std::string case_id;
    ClassLabel class_label = ClassLabel::A;
    uint64_t texture_seed = 0;
    int n_patches = 0;
};

struct ManifestRecord {
    std::string case_id;
    ClassLabel class_label = ClassLabel::A;
    Domain domain = Domain::FFPE;
    std::string split;
    std::string path;
    uint64_t seed = 0;
    std::string patch_id;
};

namespace synth_detail {

struct ClassTexture {
    float radius;
    float density;     // blobs per 64x64 area
    float anisotropy;  // x-stretch of blobs
};

inline ClassTexture class_texture(ClassLabel c) {
    switch (c) {
        case ClassLabel::A: return {2.0f, 90.f, 1.0f};
        case ClassLabel::B: return {4.0f, 32.f, 1.0f};
        default: return {6.5f, 12.f, 2.4f};
    }
}

}  // namespace synth_detail

// Clean "FFPE-like" render: pink H&E background with class-specific dark
// nuclei blobs; the case seed perturbs base tone and blob parameters so
// patches within a case share texture statistics.
inline Tensor render_clean_patch(ClassLabel cls, uint64_t case_seed, uint64_t patch_seed,
                                 int64_t size) {
    synth_detail::ClassTexture tex = synth_detail::class_texture(cls);
    Rng case_rng(case_seed);
    float base_r = 0.88f + 0.04f * case_rng.uniform(-1.f, 1.f);
    float base_g = 0.70f + 0.04f * case_rng.uniform(-1.f, 1.f);
    float base_b = 0.80f + 0.04f * case_rng.uniform(-1.f, 1.f);
    float radius = tex.radius * (1.f + 0.1f * case_rng.uniform(-1.f, 1.f));
    float density = tex.density * (1.f + 0.15f * case_rng.uniform(-1.f, 1.f));

    Tensor img({3, size, size});
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            img.at3(0, y, x) = base_r;
            img.at3(1, y, x) = base_g;
            img.at3(2, y, x) = base_b;
        }
    Rng rng(patch_seed);
    int64_t count = int64_t(std::lround(density * double(size) * double(size) / (64.0 * 64.0)));
    for (int64_t b = 0; b < count; ++b) {
        float cx = rng.uniform(0.f, float(size));
        float cy = rng.uniform(0.f, float(size));
        float r = radius * (0.8f + 0.4f * rng.uniform());
        float depth = 0.55f + 0.25f * rng.uniform();
        float ax = tex.anisotropy;
        int64_t span = int64_t(std::ceil(r * std::max(ax, 1.f) * 2.f));
        for (int64_t y = std::max<int64_t>(0, int64_t(cy) - span);
             y <= std::min(size - 1, int64_t(cy) + span); ++y)
            for (int64_t x = std::max<int64_t>(0, int64_t(cx) - span);
                 x <= std::min(size - 1, int64_t(cx) + span); ++x) {
                float dx = (float(x) - cx) / ax;
                float dy = float(y) - cy;
                float d2 = (dx * dx + dy * dy) / (r * r);
                if (d2 > 4.f) continue;
                float a = depth * std::exp(-d2);
                img.at3(0, y, x) = (1.f - a) * img.at3(0, y, x) + a * 0.34f;
                img.at3(1, y, x) = (1.f - a) * img.at3(1, y, x) + a * 0.18f;
                img.at3(2, y, x) = (1.f - a) * img.at3(2, y, x) + a * 0.48f;
            }
    }
    for (float& v : img.data) v = std::clamp(v, 0.f, 1.f);
    return img;
}

// FS corruption: dark curved fold streaks, white elliptical ice holes, and a
// global per-channel color shift. An all-zero config is an exact no-op.
inline Tensor apply_fs_artifacts(const Tensor& clean, const ArtifactConfig& cfg, Rng& rng) {
    if (cfg.is_noop()) return clean;
    int64_t size_y = clean.shape[1], size_x = clean.shape[2];
    double area_scale = double(size_y) * double(size_x) / (64.0 * 64.0);
    Tensor img = clean;

    int64_t n_folds = int64_t(std::lround(cfg.fold_density * area_scale));
    for (int64_t f = 0; f < n_folds; ++f) {
        // quadratic Bezier streak across the patch
        float x0 = rng.uniform(0.f, float(size_x)), y0 = rng.uniform(0.f, float(size_y));
        float x2 = rng.uniform(0.f, float(size_x)), y2 = rng.uniform(0.f, float(size_y));
        float x1 = 0.5f * (x0 + x2) + rng.uniform(-0.4f, 0.4f) * float(size_x);
        float y1 = 0.5f * (y0 + y2) + rng.uniform(-0.4f, 0.4f) * float(size_y);
        float darkness = 0.45f + 0.15f * rng.uniform();
        int steps = int(2 * (size_x + size_y));
        for (int s = 0; s <= steps; ++s) {
            float t = float(s) / float(steps);
            float px = (1 - t) * (1 - t) * x0 + 2 * (1 - t) * t * x1 + t * t * x2;
            float py = (1 - t) * (1 - t) * y0 + 2 * (1 - t) * t * y1 + t * t * y2;
            float hw = cfg.streak_width * 0.5f;
            for (int64_t y = std::max<int64_t>(0, int64_t(py - hw - 1));
                 y <= std::min(size_y - 1, int64_t(py + hw + 1)); ++y)
                for (int64_t x = std::max<int64_t>(0, int64_t(px - hw - 1));
                     x <= std::min(size_x - 1, int64_t(px + hw + 1)); ++x) {
                    float d = std::hypot(float(x) - px, float(y) - py);
                    if (d > hw) continue;
                    for (int c = 0; c < 3; ++c)
                        img.at3(c, y, x) = std::min(img.at3(c, y, x),
                                                    clean.at3(c, y, x) * darkness);
                }
        }
    }

    int64_t n_holes = int64_t(std::lround(cfg.ice_hole_rate * area_scale));
    for (int64_t hIdx = 0; hIdx < n_holes; ++hIdx) {
        float cx = rng.uniform(0.f, float(size_x));
        float cy = rng.uniform(0.f, float(size_y));
        float rx = rng.uniform(cfg.hole_radius_min, cfg.hole_radius_max);
        float ry = rng.uniform(cfg.hole_radius_min, cfg.hole_radius_max);
        for (int64_t y = std::max<int64_t>(0, int64_t(cy - ry) - 1);
             y <= std::min(size_y - 1, int64_t(cy + ry) + 1); ++y)
            for (int64_t x = std::max<int64_t>(0, int64_t(cx - rx) - 1);
                 x <= std::min(size_x - 1, int64_t(cx + rx) + 1); ++x) {
                float dx = (float(x) - cx) / rx, dy = (float(y) - cy) / ry;
                float d2 = dx * dx + dy * dy;
                if (d2 > 1.f) continue;
                float a = std::min(1.f, 1.6f * (1.f - d2));
                for (int c = 0; c < 3; ++c)
                    img.at3(c, y, x) = (1.f - a) * img.at3(c, y, x) + a * 0.97f;
            }
    }

    float shift[3] = {cfg.color_shift_r, cfg.color_shift_g, cfg.color_shift_b};
    for (int c = 0; c < 3; ++c)
        for (int64_t i = 0; i < size_y * size_x; ++i)
            img.data[size_t(c * size_y * size_x + i)] += shift[c];
    for (float& v : img.data) v = std::clamp(v, 0.f, 1.f);
    return img;
}

// lossless row-major tiling
struct TileRef {
    int row = 0, col = 0;
    Tensor pixels;
};

inline std::vector<TileRef> tile(const Tensor& image, int64_t tile_size) {
    if (image.rank() != 3) throw std::invalid_argument("tile: expected (C,H,W)");
    if (image.shape[1] % tile_size != 0 || image.shape[2] % tile_size != 0)
        throw std::invalid_argument("tile: dims " + Tensor::shape_str(image.shape) +
                                    " not divisible by tile size " + std::to_string(tile_size));
    int64_t C = image.shape[0];
    int64_t rows = image.shape[1] / tile_size, cols = image.shape[2] / tile_size;
    std::vector<TileRef> out;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            TileRef t;
            t.row = int(r);
            t.col = int(c);
            t.pixels = Tensor({C, tile_size, tile_size});
            for (int64_t ch = 0; ch < C; ++ch)
                for (int64_t y = 0; y < tile_size; ++y)
                    for (int64_t x = 0; x < tile_size; ++x)
                        t.pixels.at3(ch, y, x) =
                            image.at3(ch, r * tile_size + y, c * tile_size + x);
            out.push_back(std::move(t));
        }
    return out;
}

inline Tensor reassemble(const std::vector<TileRef>& tiles, int64_t rows, int64_t cols) {
    if (tiles.empty()) throw std::invalid_argument("reassemble: no tiles");
    int64_t ts = tiles[0].pixels.shape[1];
    int64_t C = tiles[0].pixels.shape[0];
    Tensor out({C, rows * ts, cols * ts});
    for (const TileRef& t : tiles)
        for (int64_t ch = 0; ch < C; ++ch)
            for (int64_t y = 0; y < ts; ++y)
                for (int64_t x = 0; x < ts; ++x)
                    out.at3(ch, t.row * ts + y, t.col * ts + x) = t.pixels.at3(ch, y, x);
    return out;
}

struct DatasetConfig {
    int n_cases = 18;
    int patches_per_case = 16;
    int64_t patch_size = 64;
    double split_train = 0.7, split_val = 0.15, split_test = 0.15;
    uint64_t seed = 1;
    ArtifactConfig artifacts;
};

inline std::string patch_rel_path(const std::string& split, Domain domain,
                                  const std::string& case_id, const std::string& patch_id) {
    return split + "/" + to_string(domain) + "/" + case_id + "/" + patch_id + ".png";
}

// Renders the full corpus to <root>/<split>/<domain>/<case>/<patch>.png and
// writes manifest.jsonl. Deterministic given the seed.
inline std::vector<ManifestRecord> generate_dataset(const std::string& root,
                                                    const DatasetConfig& cfg) {
    if (cfg.n_cases % 3 != 0)
        throw std::invalid_argument("n_cases must be divisible by 3 for class balance");
    if (std::abs(cfg.split_train + cfg.split_val + cfg.split_test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");

    // case specs: classes dealt round-robin, case-level stratified splits
    std::vector<CaseSpec> cases;
    for (int i = 0; i < cfg.n_cases; ++i) {
        CaseSpec c;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "case_%03d", i);
        c.case_id = buf;
        c.class_label = ClassLabel(i % 3);
        c.texture_seed = derive_seed(cfg.seed, uint64_t(i));
        c.n_patches = cfg.patches_per_case;
        cases.push_back(std::move(c));
    }
    auto split_of = [&](int idx_in_class, int per_class) {
        int n_train = int(std::lround(cfg.split_train * per_class));
        int n_val = int(std::lround(cfg.split_val * per_class));
        if (idx_in_class < n_train) return std::string("train");
        if (idx_in_class < n_train + n_val) return std::string("val");
        return std::string("test");
    };

    std::vector<ManifestRecord> manifest;
    int per_class = cfg.n_cases / 3;
    std::vector<int> seen_per_class(3, 0);
    for (const CaseSpec& c : cases) {
        int cls = int(c.class_label);
        std::string split = split_of(seen_per_class[size_t(cls)]++, per_class);
        for (int p = 0; p < c.n_patches; ++p)
            for (Domain dom : {Domain::FFPE, Domain::FS}) {
                // distinct patch seeds per domain: FS/FFPE are unpaired
                uint64_t pseed = derive_seed(c.texture_seed, uint64_t(p),
                                             dom == Domain::FS ? 1u : 0u);
                Tensor img = render_clean_patch(c.class_label, c.texture_seed, pseed,
                                                cfg.patch_size);
                if (dom == Domain::FS) {
                    Rng art_rng(derive_seed(pseed, 7));
                    img = apply_fs_artifacts(img, cfg.artifacts, art_rng);
                }
                ManifestRecord rec;
                rec.case_id = c.case_id;
                rec.class_label = c.class_label;
                rec.domain = dom;
                rec.split = split;
                char pbuf[32];
                std::snprintf(pbuf, sizeof(pbuf), "patch_%03d", p);
                rec.patch_id = pbuf;
                rec.seed = pseed;
                rec.path = patch_rel_path(split, dom, c.case_id, rec.patch_id);
                std::filesystem::path full = std::filesystem::path(root) / rec.path;
                std::error_code ec;
                std::filesystem::create_directories(full.parent_path(), ec);
                if (ec)
                    throw std::runtime_error("generate_dataset: cannot create " +
                                             full.parent_path().string() + ": " + ec.message());
                save_png(full.string(), img);
                manifest.push_back(std::move(rec));
            }
    }

    std::ofstream mf(std::filesystem::path(root) / "manifest.jsonl");
    if (!mf) throw std::runtime_error("generate_dataset: cannot write manifest under " + root);
    for (const ManifestRecord& r : manifest) {
        nlohmann::json j{{"case_id", r.case_id},
                         {"class", to_string(r.class_label)},
                         {"domain", to_string(r.domain)},
                         {"split", r.split},
                         {"path", r.path},
                         {"seed", r.seed},
                         {"patch_id", r.patch_id}};
        mf << j.dump() << "\n";
    }
    return manifest;
}

inline std::vector<ManifestRecord> load_manifest(const std::string& root) {
    std::ifstream mf(std::filesystem::path(root) / "manifest.jsonl");
    if (!mf) throw std::runtime_error("load_manifest: missing manifest.jsonl under " + root);
    std::vector<ManifestRecord> out;
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        ManifestRecord r;
        r.case_id = j.at("case_id").get<std::string>();
        r.class_label = class_from_string(j.at("class").get<std::string>());
        r.domain = domain_from_string(j.at("domain").get<std::string>());
        r.split = j.at("split").get<std::string>();
        r.path = j.at("path").get<std::string>();
        r.seed = j.at("seed").get<uint64_t>();
        r.patch_id = j.at("patch_id").get<std::string>();
        out.push_back(std::move(r));
    }
    return out;
}

inline ImagePatch load_patch(const std::string& root, const ManifestRecord& rec) {
    ImagePatch p;
    p.pixels = load_png((std::filesystem::path(root) / rec.path).string());
    p.domain = rec.domain;
    p.class_label = rec.class_label;
    p.case_id = rec.case_id;
    p.patch_id = rec.patch_id;
    return p;
}

}  // namespace f2f
