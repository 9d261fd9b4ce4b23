#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/nn.hpp"
#include "f2f/schedule.hpp"
#include "f2f/types.hpp"

namespace f2f {

inline Tensor sinusoidal_embedding(int t, int64_t dim) {
    Tensor out({dim});
    int64_t half = dim / 2;
    for (int64_t i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        out[i] = static_cast<float>(std::sin(t * freq));
        out[half + i] = static_cast<float>(std::cos(t * freq));
    }
    return out;
}

// residual block with additive conditioning: x + conv(silu(conv(silu(x)) + cond_bias))
struct ResBlock {
    nn::Conv2d conv1, conv2;
    nn::Linear cond_proj;

    ResBlock() = default;
    // conv2 starts at zero so the block is the identity at init; this keeps
    // the stacked residual output at unit scale instead of growing with depth
    ResBlock(int64_t ch, int64_t cond_dim, Rng& rng)
        : conv1(ch, ch, 3, 1, rng), conv2(ch, ch, 3, 1, rng, true),
          cond_proj(cond_dim, ch, rng) {}

    Var forward(const Var& x, const Var& cond) const {
        Var h = conv1.forward(silu(x));
        h = add_channel_bias(h, cond_proj.forward(cond));
        h = conv2.forward(silu(h));
        return add(x, h);
    }

    void params(nn::ParamList& out, const std::string& prefix) const {
        conv1.params(out, prefix + ".conv1");
        conv2.params(out, prefix + ".conv2");
        cond_proj.params(out, prefix + ".cond_proj");
    }
    void linear_layers(std::vector<nn::Linear*>& out) { out.push_back(&cond_proj); }
};

// Small residual U-Net over (4,h,w) latents, three resolutions. Conditioning
// is a concat of (timestep embedding + learned domain-token embedding) with
// a linear projection of the feature embedding e; absent e contributes zeros.
struct Denoiser {
    static constexpr int64_t kTimeDim = 64;
    static constexpr int64_t kCondDim = 128;

    int64_t embed_dim = 128;  // d_e of the feature extractor
    int t_train = 1000;

    Var token_table;  // (3, kTimeDim), rows: FS, FFPE, Null
    nn::Linear time1, time2;
    nn::Linear embed_proj;
    nn::Conv2d conv_in;
    ResBlock rb_down1, rb_down2, rb_mid, rb_up2, rb_up1;
    nn::Conv2d down1, down2;  // stride-2
    nn::Conv2d up2, up1;      // after nearest upsample
    nn::Conv2d conv_out;
    int lora_rank = 0;

    Denoiser() = default;
    Denoiser(int64_t embed_dim_, Rng& rng, int64_t ch = 32, int t_train_ = 1000)
        : embed_dim(embed_dim_), t_train(t_train_),
          time1(kTimeDim, kTimeDim, rng), time2(kTimeDim, kTimeDim, rng),
          embed_proj(embed_dim_, kCondDim - kTimeDim, rng),
          conv_in(4, ch, 3, 1, rng),
          rb_down1(ch, kCondDim, rng), rb_down2(2 * ch, kCondDim, rng),
          rb_mid(2 * ch, kCondDim, rng), rb_up2(2 * ch, kCondDim, rng),
          rb_up1(ch, kCondDim, rng),
          down1(ch, 2 * ch, 3, 2, rng), down2(2 * ch, 2 * ch, 3, 2, rng),
          up2(2 * ch, 2 * ch, 3, 1, rng), up1(2 * ch, ch, 3, 1, rng),
          conv_out(ch, 4, 3, 1, rng, true) {
        // distinct random token embeddings for FS / FFPE / Null
        token_table = make_param(rng.normal_tensor({3, kTimeDim}, 0.5f));
    }

    Var condition_vector(int t, const ConditionBundle& cond) const {
        Var temb = make_var(sinusoidal_embedding(t, kTimeDim));
        Var h = time2.forward(silu(time1.forward(temb)));
        int row = cond.token == DomainToken::FS ? 0 : (cond.token == DomainToken::FFPE ? 1 : 2);
        Var tok = slice_row(row);
        h = add(h, tok);
        Var eproj;
        if (cond.embedding) {
            if (cond.embedding->numel() != embed_dim)
                throw std::invalid_argument("denoiser: embedding dim " +
                                            std::to_string(cond.embedding->numel()) +
                                            " vs expected " + std::to_string(embed_dim));
            eproj = embed_proj.forward(make_var(*cond.embedding));
        } else {
            eproj = make_var(Tensor({kCondDim - kTimeDim}, 0.f));
        }
        return concat1d(h, eproj);
    }

    Var forward(const Var& z, int t, const ConditionBundle& cond) const {
        if (t < 0 || t > t_train)
            throw std::invalid_argument("denoiser: timestep out of range");
        Var c = condition_vector(t, cond);
        Var h1 = rb_down1.forward(conv_in.forward(z), c);
        Var h2 = rb_down2.forward(down1.forward(h1), c);
        Var h3 = rb_mid.forward(down2.forward(h2), c);
        Var u2 = add(up2.forward(upsample_nearest2(h3)), h2);
        u2 = rb_up2.forward(u2, c);
        Var u1 = add(up1.forward(upsample_nearest2(u2)), h1);
        u1 = rb_up1.forward(u1, c);
        return conv_out.forward(silu(u1));
    }

    Tensor predict_noise(const Tensor& z_t, int t, const ConditionBundle& cond) const {
        NoGrad ng;
        return forward(make_var(z_t), t, cond)->value;
    }

    NoisePredictor predictor() const {
        return [this](const Tensor& z, int t, const ConditionBundle& cond) {
            return predict_noise(z, t, cond);
        };
    }

    std::vector<nn::Linear*> linear_layers() {
        std::vector<nn::Linear*> out{&time1, &time2, &embed_proj};
        for (ResBlock* rb : {&rb_down1, &rb_down2, &rb_mid, &rb_up2, &rb_up1})
            rb->linear_layers(out);
        return out;
    }

    // installs zero-init adapters on every linear layer; the network output
    // is unchanged until the adapters train
    void apply_lora(int rank, Rng& rng) {
        for (nn::Linear* l : linear_layers()) l->install_lora(rank, rng);
        lora_rank = rank;
    }

    void params(nn::ParamList& out) const {
        out.push_back({"denoiser.token_table", token_table});
        time1.params(out, "denoiser.time1");
        time2.params(out, "denoiser.time2");
        embed_proj.params(out, "denoiser.embed_proj");
        conv_in.params(out, "denoiser.conv_in");
        rb_down1.params(out, "denoiser.rb_down1");
        rb_down2.params(out, "denoiser.rb_down2");
        rb_mid.params(out, "denoiser.rb_mid");
        rb_up2.params(out, "denoiser.rb_up2");
        rb_up1.params(out, "denoiser.rb_up1");
        down1.params(out, "denoiser.down1");
        down2.params(out, "denoiser.down2");
        up2.params(out, "denoiser.up2");
        up1.params(out, "denoiser.up1");
        conv_out.params(out, "denoiser.conv_out");
    }

private:
    Var slice_row(int row) const {
        // token_table row as a rank-1 view that still routes gradients
        Var table = token_table;
        Tensor out({kTimeDim});
        for (int64_t i = 0; i < kTimeDim; ++i) out[i] = table->value.at2(row, i);
        return detail::make_op(std::move(out), {table}, [row](Node& n) {
            if (!n.parents[0]->requires_grad) return;
            Tensor& pg = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < kTimeDim; ++i) pg.at2(row, i) += n.grad[i];
        });
    }
};

// forward diffusion: z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps
inline Tensor add_noise(const Tensor& z0, const Tensor& eps, int t,
                        const NoiseSchedule& schedule) {
    double ab = schedule.alpha_bar(t);
    double sq = std::sqrt(ab), sq1 = std::sqrt(1.0 - ab);
    Tensor out(z0.shape);
    for (int64_t i = 0; i < z0.numel(); ++i)
        out[i] = static_cast<float>(sq * z0[i] + sq1 * eps[i]);
    return out;
}

// classifier-free dropout: token replaced by Null with probability p, the
// embedding is always kept
inline ConditionBundle apply_token_dropout(const ConditionBundle& cond, float p, Rng& rng) {
    ConditionBundle out = cond;
    if (p > 0.f && rng.uniform() < p) out.token = DomainToken::Null;
    return out;
}

// One LDM objective sample on an arbitrary predictor (test oracles plug in
// stubs here; the trainable path goes through ldm_train_step).
template <typename PredictFn>
float ldm_loss_sample(const Tensor& z0, const ConditionBundle& cond,
                      const NoiseSchedule& schedule, Rng& rng, float dropout_p,
                      PredictFn&& predict) {
    int t = static_cast<int>(rng.uniform_int(1, schedule.t_train));
    Tensor eps = rng.normal_tensor(z0.shape);
    Tensor z_t = add_noise(z0, eps, t, schedule);
    ConditionBundle c = apply_token_dropout(cond, dropout_p, rng);
    Tensor pred = predict(z_t, t, c, eps);
    double s = 0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        double d = double(pred[i]) - eps[i];
        s += d * d;
    }
    float loss = static_cast<float>(s / double(eps.numel()));
    if (!std::isfinite(loss))
        throw std::runtime_error("ldm loss non-finite at t=" + std::to_string(t) +
                                 ", |z_t|=" + std::to_string(z_t.l2_norm()));
    return loss;
}

// noise-prediction MSE with gradient step
inline float ldm_train_step(Denoiser& model, const LatentGrid& z0, const ConditionBundle& cond,
                            const NoiseSchedule& schedule, Rng& rng, nn::Adam& opt,
                            float dropout_p = 0.1f) {
    if (z0.timestep != 0)
        throw std::invalid_argument("ldm_train_step expects a clean latent (timestep 0)");
    int t = static_cast<int>(rng.uniform_int(1, schedule.t_train));
    Tensor eps = rng.normal_tensor(z0.values.shape);
    Tensor z_t = add_noise(z0.values, eps, t, schedule);
    ConditionBundle c = apply_token_dropout(cond, dropout_p, rng);
    opt.zero_grad();
    Var pred = model.forward(make_var(z_t), t, c);
    Var loss = mse_loss(pred, make_var(eps));
    float lv = loss->value[0];
    if (!std::isfinite(lv))
        throw std::runtime_error("ldm_train_step: non-finite loss at t=" + std::to_string(t) +
                                 ", |z_t|=" + std::to_string(z_t.l2_norm()));
    backward(loss);
    opt.step();
    return lv;
}

}  // namespace f2f
