#pragma once

#include <stdexcept>
#include <string>

#include "f2f/nn.hpp"
#include "f2f/types.hpp"

namespace f2f {

// Toy feature extractor: a small conv classifier pretrained on clean
// (FFPE-style) patches; the penultimate 128-d activation is the embedding.
// Registered by name so consumers can swap in other extractors.
struct FeatureExtractor {
    static constexpr int64_t kEmbedDim = 128;

    std::string name = "toy-conv";
    nn::Conv2d c1, c2, c3;
    nn::Linear fc_embed, fc_head;

    FeatureExtractor() = default;
    explicit FeatureExtractor(Rng& rng)
        : c1(3, 16, 3, 2, rng), c2(16, 32, 3, 2, rng), c3(32, 64, 3, 2, rng),
          fc_embed(64, kEmbedDim, rng), fc_head(kEmbedDim, 3, rng) {}

    int64_t dim() const { return kEmbedDim; }

    Var embed_graph(const Var& pixels) const {
        Var h = silu(c1.forward(pixels));
        h = silu(c2.forward(h));
        h = silu(c3.forward(h));
        return silu(fc_embed.forward(global_avg_pool(h)));
    }

    Var logits_graph(const Var& pixels) const {
        return fc_head.forward(embed_graph(pixels));
    }

    // deterministic embedding of a patch
    Tensor extract(const Tensor& pixels) const {
        if (pixels.rank() != 3 || pixels.shape[0] != 3)
            throw std::invalid_argument("extract: pixels must be (3,H,W)");
        NoGrad ng;
        Tensor e = embed_graph(make_var(pixels))->value;
        if (!e.all_finite()) throw std::runtime_error("extract: non-finite embedding");
        return e;
    }

    Tensor extract(const ImagePatch& patch) const { return extract(patch.pixels); }

    float train_step(const Tensor& pixels, int label, nn::Adam& opt) {
        opt.zero_grad();
        Var loss = softmax_cross_entropy(logits_graph(make_var(pixels)), {label});
        backward(loss);
        opt.step();
        return loss->value[0];
    }

    int predict_class(const Tensor& pixels) const {
        NoGrad ng;
        Tensor l = logits_graph(make_var(pixels))->value;
        return static_cast<int>(std::max_element(l.data.begin(), l.data.end()) -
                                l.data.begin());
    }

    void params(nn::ParamList& out) const {
        c1.params(out, "extractor.c1");
        c2.params(out, "extractor.c2");
        c3.params(out, "extractor.c3");
        fc_embed.params(out, "extractor.fc_embed");
        fc_head.params(out, "extractor.fc_head");
    }
};

}  // namespace f2f
