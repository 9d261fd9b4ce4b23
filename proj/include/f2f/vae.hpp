#pragma once

#include <stdexcept>
#include <string>

#include "f2f/nn.hpp"
#include "f2f/types.hpp"

namespace f2f {

// Two-level convolutional VAE: downsample factor 4, 4 latent channels.
// encode() returns the posterior mean scaled to roughly unit variance
// (latent_scale is calibrated after training); decode() is sigmoid-bounded
// so outputs always land in [0,1].
struct Vae {
    static constexpr int kDownsample = 4;
    static constexpr int kLatentChannels = 4;

    nn::Conv2d e1, e2, e3;         // 3->32 s2, 32->64 s2, 64->8 s1 (mu|logvar)
    nn::Conv2d d1, d2, d3, d4;     // 4->64, up 64->64, up 64->32, 32->3
    float latent_scale = 1.f;

    Vae() = default;
    explicit Vae(Rng& rng)
        : e1(3, 32, 3, 2, rng), e2(32, 64, 3, 2, rng), e3(64, 8, 3, 1, rng),
          d1(kLatentChannels, 64, 3, 1, rng), d2(64, 64, 3, 1, rng),
          d3(64, 32, 3, 1, rng), d4(32, 3, 3, 1, rng) {}

    // encoder head: (mu, logvar), both (4, H/4, W/4), unscaled
    std::pair<Var, Var> posterior(const Var& x) const {
        Var h = silu(e1.forward(x));
        h = silu(e2.forward(h));
        Var stats = e3.forward(h);
        return {slice_channels(stats, 0, kLatentChannels),
                slice_channels(stats, kLatentChannels, 2 * kLatentChannels)};
    }

    Var decode_graph(const Var& z) const {
        Var h = silu(d1.forward(z));
        h = silu(d2.forward(upsample_nearest2(h)));
        h = silu(d3.forward(upsample_nearest2(h)));
        return sigmoid(d4.forward(h));
    }

    // deterministic encode: posterior mean, scaled
    LatentGrid encode(const ImagePatch& x) const {
        x.validate(kDownsample);
        NoGrad ng;
        auto [mu, logvar] = posterior(make_var(x.pixels));
        Tensor z = mu->value * latent_scale;
        if (!z.all_finite()) throw std::runtime_error("encode: non-finite latent");
        return LatentGrid{std::move(z), 0};
    }

    // deterministic decode of a clean latent, output (3,H,W) in [0,1]
    Tensor decode(const LatentGrid& z) const {
        if (z.values.rank() != 3 || z.values.shape[0] != kLatentChannels)
            throw std::invalid_argument("decode: latent must be (" +
                                        std::to_string(kLatentChannels) + ",h,w), got " +
                                        Tensor::shape_str(z.values.shape));
        NoGrad ng;
        Tensor unscaled = z.values * (1.f / latent_scale);
        Tensor out = decode_graph(make_var(unscaled))->value;
        for (float& v : out.data) v = std::clamp(v, 0.f, 1.f);
        return out;
    }

    // reconstruction MSE + small KL; reparameterized sample
    std::pair<float, float> train_step(const Tensor& pixels, Rng& rng, nn::Adam& opt,
                                       float kl_weight = 1e-6f) {
        opt.zero_grad();
        Var x = make_var(pixels);
        auto [mu, logvar] = posterior(x);
        Var eps = make_var(rng.normal_tensor(mu->value.shape));
        Var std_dev = exp_op(scale(logvar, 0.5f));
        Var z = add(mu, mul(std_dev, eps));
        Var recon = decode_graph(z);
        Var rec_loss = mse_loss(recon, x);
        // KL(q | N(0,I)) per element: 0.5 (mu^2 + e^logvar - 1 - logvar)
        Var kl = scale(sub(add(mul(mu, mu), exp_op(logvar)),
                           add(logvar, make_var(Tensor(logvar->value.shape, 1.f)))),
                       0.5f);
        Var loss = add(rec_loss, scale(mean_all(kl), kl_weight));
        if (!std::isfinite(loss->value[0]))
            throw std::runtime_error("vae train_step: non-finite loss");
        backward(loss);
        opt.step();
        return {rec_loss->value[0], loss->value[0]};
    }

    float reconstruction_mse(const Tensor& pixels) const {
        NoGrad ng;
        auto [mu, logvar] = posterior(make_var(pixels));
        Tensor rec = decode_graph(mu)->value;
        double s = 0;
        for (int64_t i = 0; i < rec.numel(); ++i) {
            double diff = double(rec[i]) - pixels[i];
            s += diff * diff;
        }
        return static_cast<float>(s / double(rec.numel()));
    }

    void params(nn::ParamList& out) const {
        e1.params(out, "vae.e1");
        e2.params(out, "vae.e2");
        e3.params(out, "vae.e3");
        d1.params(out, "vae.d1");
        d2.params(out, "vae.d2");
        d3.params(out, "vae.d3");
        d4.params(out, "vae.d4");
    }
};

}  // namespace f2f
