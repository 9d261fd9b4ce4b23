#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "f2f/tensor.hpp"

namespace f2f {

enum class Domain { FS, FFPE };
enum class DomainToken { FS, FFPE, Null };
enum class ClassLabel { A, B, C };

inline const char* to_string(Domain d) { return d == Domain::FS ? "fs" : "ffpe"; }
inline const char* to_string(DomainToken t) {
    switch (t) {
        case DomainToken::FS: return "fs";
        case DomainToken::FFPE: return "ffpe";
        default: return "null";
    }
}
inline const char* to_string(ClassLabel c) {
    switch (c) {
        case ClassLabel::A: return "A";
        case ClassLabel::B: return "B";
        default: return "C";
    }
}

inline Domain domain_from_string(const std::string& s) {
    if (s == "fs") return Domain::FS;
    if (s == "ffpe") return Domain::FFPE;
    throw std::invalid_argument("unknown domain: " + s);
}
inline ClassLabel class_from_string(const std::string& s) {
    if (s == "A") return ClassLabel::A;
    if (s == "B") return ClassLabel::B;
    if (s == "C") return ClassLabel::C;
    throw std::invalid_argument("unknown class label: " + s);
}

// H&E-style image patch; pixels stored channel-first (3,H,W) in [0,1].
struct ImagePatch {
    Tensor pixels;
    Domain domain = Domain::FFPE;
    ClassLabel class_label = ClassLabel::A;
    std::string case_id;
    std::string patch_id;

    int64_t height() const { return pixels.shape[1]; }
    int64_t width() const { return pixels.shape[2]; }

    void validate(int downsample_factor) const {
        if (pixels.rank() != 3 || pixels.shape[0] != 3)
            throw std::invalid_argument("ImagePatch pixels must be (3,H,W)");
        if (height() % downsample_factor != 0 || width() % downsample_factor != 0)
            throw std::invalid_argument("patch dims " + Tensor::shape_str(pixels.shape) +
                                        " not divisible by downsample factor " +
                                        std::to_string(downsample_factor));
        for (float v : pixels.data)
            if (!(v >= 0.f && v <= 1.f))
                throw std::invalid_argument("pixel value outside [0,1]");
    }
};

// Spatial latent at a diffusion timestep; values are (c,h,w).
struct LatentGrid {
    Tensor values;
    int timestep = 0;
};

// Everything the denoiser is conditioned on. A Null token with a present
// embedding is the Eq.-style "unconditional" branch that keeps the embedding;
// (Null, absent) only appears as training dropout.
struct ConditionBundle {
    DomainToken token = DomainToken::Null;
    std::optional<Tensor> embedding;
};

}  // namespace f2f
