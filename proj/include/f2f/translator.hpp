#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2f/nn.hpp"
#include "f2f/types.hpp"

namespace f2f {

// U-style fully connected generator: d -> 64 -> 32 -> 64 -> d with an
// additive skip between the mirrored hidden layers and a final residual from
// the input. The last layer is zero-initialized so the map starts as the
// identity.
struct UStyleFC {
    nn::Linear l1, l2, l3, l4;
    float slope = 0.2f;

    UStyleFC() = default;
    UStyleFC(int64_t dim, Rng& rng, int64_t h1 = 64, int64_t h2 = 32,
             bool identity_init = true)
        : l1(dim, h1, rng), l2(h1, h2, rng), l3(h2, h1, rng),
          l4(h1, dim, rng, identity_init) {}

    Var forward(const Var& x) const {
        Var a1 = leaky_relu(l1.forward(x), slope);
        Var a2 = leaky_relu(l2.forward(a1), slope);
        Var a3 = add(leaky_relu(l3.forward(a2), slope), a1);
        return add(l4.forward(a3), x);
    }

    Tensor apply(const Tensor& e) const {
        NoGrad ng;
        return forward(make_var(e))->value;
    }

    void params(nn::ParamList& out, const std::string& prefix) const {
        l1.params(out, prefix + ".l1");
        l2.params(out, prefix + ".l2");
        l3.params(out, prefix + ".l3");
        l4.params(out, prefix + ".l4");
    }
};

// WGAN critic: plain MLP with LeakyReLU, no normalization.
struct Critic {
    std::vector<nn::Linear> layers;
    float slope = 0.2f;

    Critic() = default;
    Critic(int64_t dim, Rng& rng, std::vector<int64_t> hidden = {128, 128}) {
        int64_t prev = dim;
        for (int64_t h : hidden) {
            layers.emplace_back(prev, h, rng);
            prev = h;
        }
        layers.emplace_back(prev, 1, rng);
    }

    Var forward(const Var& x) const {
        Var h = x;
        for (size_t i = 0; i < layers.size(); ++i) {
            h = layers[i].forward(h);
            if (i + 1 < layers.size()) h = leaky_relu(h, slope);
        }
        return h;
    }

    void params(nn::ParamList& out, const std::string& prefix) const {
        for (size_t i = 0; i < layers.size(); ++i)
            layers[i].params(out, prefix + ".l" + std::to_string(i));
    }
};

// Gradient penalty mean((|grad_x D(x_hat)| - 1)^2) on random interpolates.
//
// The critic is piecewise linear, so with activation masks frozen the input
// gradient is an explicit product of weight matrices; both the penalty and
// its gradient with respect to the critic weights are computed in closed
// form here (accumulated into the weight .grad buffers when requested).
inline float gradient_penalty(const Critic& critic, const Tensor& real_batch,
                              const Tensor& fake_batch, Rng& rng,
                              float grad_coeff = 0.f) {
    if (!real_batch.same_shape(fake_batch) || real_batch.rank() != 2)
        throw std::invalid_argument("gradient_penalty: batches must be (m,d) and match");
    int64_t m = real_batch.shape[0], d = real_batch.shape[1];
    size_t n_layers = critic.layers.size();
    double penalty_total = 0.0;
    for (int64_t s = 0; s < m; ++s) {
        float u = rng.uniform();
        Tensor x({d});
        for (int64_t j = 0; j < d; ++j)
            x[j] = u * real_batch.at2(s, j) + (1.f - u) * fake_batch.at2(s, j);

        // forward, keeping pre-activation masks
        std::vector<Tensor> acts(n_layers + 1);  // acts[l] = input of layer l
        std::vector<Tensor> masks(n_layers);     // LeakyReLU derivative after layer l
        acts[0] = x;
        Tensor h = x;
        for (size_t l = 0; l < n_layers; ++l) {
            const Tensor& W = critic.layers[l].W->value;
            const Tensor& b = critic.layers[l].b->value;
            Tensor z({W.shape[0]});
            for (int64_t o = 0; o < W.shape[0]; ++o) {
                double acc = b[o];
                for (int64_t i = 0; i < W.shape[1]; ++i) acc += double(W.at2(o, i)) * h[i];
                z[o] = static_cast<float>(acc);
            }
            if (l + 1 < n_layers) {
                Tensor mk({z.numel()});
                for (int64_t i = 0; i < z.numel(); ++i)
                    mk[i] = z[i] > 0.f ? 1.f : critic.slope;
                masks[l] = mk;
                for (int64_t i = 0; i < z.numel(); ++i)
                    if (z[i] <= 0.f) z[i] *= critic.slope;
            }
            acts[l + 1] = z;
            h = acts[l + 1];
        }

        // t[l] = d out / d (pre-activation of layer l)
        std::vector<Tensor> t(n_layers);
        t[n_layers - 1] = Tensor({1}, 1.f);
        for (size_t l = n_layers - 1; l > 0; --l) {
            const Tensor& W = critic.layers[l].W->value;
            Tensor prev({W.shape[1]});
            for (int64_t i = 0; i < W.shape[1]; ++i) {
                double acc = 0;
                for (int64_t o = 0; o < W.shape[0]; ++o)
                    acc += double(W.at2(o, i)) * t[l][o];
                prev[i] = static_cast<float>(acc);
            }
            for (int64_t i = 0; i < prev.numel(); ++i) prev[i] *= masks[l - 1][i];
            t[l - 1] = prev;
        }
        const Tensor& W0 = critic.layers[0].W->value;
        Tensor g({d});
        for (int64_t j = 0; j < d; ++j) {
            double acc = 0;
            for (int64_t o = 0; o < W0.shape[0]; ++o) acc += double(W0.at2(o, j)) * t[0][o];
            g[j] = static_cast<float>(acc);
        }

        float norm = g.l2_norm();
        float diff = norm - 1.f;
        penalty_total += double(diff) * diff;
        if (grad_coeff == 0.f) continue;

        // q = d penalty / d g, then propagate through g = W0^T t0,
        // t_l = mask_l * (W_{l+1}^T t_{l+1}) with masks held fixed
        Tensor q({d});
        if (norm > 1e-12f) {
            float c = 2.f * diff / norm * grad_coeff / float(m);
            for (int64_t j = 0; j < d; ++j) q[j] = c * g[j];
        }
        Tensor r = q;  // r_{l-1} in the recurrence; starts as dP/dg
        for (size_t l = 0; l < n_layers; ++l) {
            const Tensor& W = critic.layers[l].W->value;
            Tensor& dW = critic.layers[l].W->ensure_grad();
            // dP/dW_l = t_l (outer) r
            for (int64_t o = 0; o < W.shape[0]; ++o)
                for (int64_t i = 0; i < W.shape[1]; ++i)
                    dW.at2(o, i) += t[l][o] * r[i];
            if (l + 1 < n_layers) {
                Tensor next({W.shape[0]});
                for (int64_t o = 0; o < W.shape[0]; ++o) {
                    double acc = 0;
                    for (int64_t i = 0; i < W.shape[1]; ++i)
                        acc += double(W.at2(o, i)) * r[i];
                    next[o] = static_cast<float>(acc) * masks[l][o];
                }
                r = next;
            }
        }
    }
    float penalty = static_cast<float>(penalty_total / double(m));
    if (!std::isfinite(penalty))
        throw std::runtime_error("gradient_penalty: non-finite penalty");
    return penalty;
}

// (1 - alpha) * e_fs + alpha * G(e_fs); endpoints are returned exactly.
inline Tensor translate_embedding(const Tensor& e_fs, const UStyleFC& g, float alpha) {
    if (!(alpha >= 0.f && alpha <= 1.f))
        throw std::invalid_argument("alpha must be in [0,1]");
    if (e_fs.numel() != g.l1.in_dim())
        throw std::invalid_argument("translate_embedding: dim " +
                                    std::to_string(e_fs.numel()) + " vs translator " +
                                    std::to_string(g.l1.in_dim()));
    if (alpha == 0.f) return e_fs;
    Tensor out = g.apply(e_fs);
    if (alpha == 1.f) return out;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = (1.f - alpha) * e_fs[i] + alpha * out[i];
    return out;
}

struct TranslatorWeights {
    float lambda_gp = 10.f;
    float lambda_cyc = 10.f;
    int n_critic = 5;
};

struct TranslatorLosses {
    float critic_ffpe = 0.f;
    float critic_fs = 0.f;
    float gp_ffpe = 0.f;
    float gp_fs = 0.f;
    float gen_adv = 0.f;
    float cycle = 0.f;

    void check_finite() const {
        for (float v : {critic_ffpe, critic_fs, gp_ffpe, gp_fs, gen_adv, cycle})
            if (!std::isfinite(v))
                throw std::runtime_error(
                    "translator_train_step: non-finite loss (critic_ffpe=" +
                    std::to_string(critic_ffpe) + " critic_fs=" + std::to_string(critic_fs) +
                    " gp_ffpe=" + std::to_string(gp_ffpe) + " gp_fs=" + std::to_string(gp_fs) +
                    " gen_adv=" + std::to_string(gen_adv) + " cycle=" + std::to_string(cycle) + ")");
    }
};

// FS->FFPE generator G, FFPE->FS generator F, and one critic per target
// domain, trained WGAN-GP style in cycle fashion.
struct TranslatorPair {
    UStyleFC g;  // e_fs -> e_ffpe
    UStyleFC f;  // e_ffpe -> e_fs
    Critic d_ffpe;
    Critic d_fs;
    nn::Adam opt_g, opt_d;
    TranslatorWeights weights;

    TranslatorPair() = default;
    TranslatorPair(int64_t dim, Rng& rng, float lr = 1e-4f)
        : g(dim, rng), f(dim, rng), d_ffpe(dim, rng), d_fs(dim, rng) {
        nn::ParamList gen_params, critic_params;
        g.params(gen_params, "g");
        f.params(gen_params, "f");
        d_ffpe.params(critic_params, "d_ffpe");
        d_fs.params(critic_params, "d_fs");
        opt_g = nn::Adam(nn::vars_of(gen_params), lr, 0.f, 0.9f);
        opt_d = nn::Adam(nn::vars_of(critic_params), lr, 0.f, 0.9f);
    }

    int64_t dim() const { return g.l1.in_dim(); }

    void params(nn::ParamList& out) const {
        g.params(out, "g");
        f.params(out, "f");
        d_ffpe.params(out, "d_ffpe");
        d_fs.params(out, "d_fs");
    }
};

namespace detail {

// critic loss E[D(fake)] - E[D(real)] + lambda_gp * GP, with gradients
inline std::pair<float, float> critic_update(Critic& critic, const Tensor& real,
                                             const Tensor& fake, float lambda_gp,
                                             Rng& rng) {
    Var v_fake = critic.forward(make_var(fake));
    Var v_real = critic.forward(make_var(real));
    Var loss = sub(mean_all(v_fake), mean_all(v_real));
    backward(loss);
    float gp = gradient_penalty(critic, real, fake, rng, lambda_gp);
    return {loss->value[0] + lambda_gp * gp, gp};
}

}  // namespace detail

// One translator step: n_critic critic updates followed by one generator
// update, on the given unpaired embedding batches (m,d).
inline TranslatorLosses translator_train_step(TranslatorPair& pair, const Tensor& batch_fs,
                                              const Tensor& batch_ffpe, Rng& rng) {
    if (batch_fs.rank() != 2 || batch_ffpe.rank() != 2 ||
        batch_fs.shape[1] != pair.dim() || batch_ffpe.shape[1] != pair.dim())
        throw std::invalid_argument("translator_train_step: batches must be (m,d_e)");
    TranslatorLosses out;
    Tensor fake_ffpe, fake_fs;
    {
        NoGrad ng;
        fake_ffpe = pair.g.forward(make_var(batch_fs))->value;
        fake_fs = pair.f.forward(make_var(batch_ffpe))->value;
    }
    for (int k = 0; k < pair.weights.n_critic; ++k) {
        pair.opt_d.zero_grad();
        // both directions share the interpolation draws so the step is exactly
        // symmetric under (g<->f, fs<->ffpe, d_ffpe<->d_fs)
        uint64_t gp_seed = rng.gen();
        Rng rng_ffpe(gp_seed), rng_fs(gp_seed);
        auto [loss_ffpe, gp_ffpe] = detail::critic_update(pair.d_ffpe, batch_ffpe, fake_ffpe,
                                                          pair.weights.lambda_gp, rng_ffpe);
        auto [loss_fs, gp_fs] = detail::critic_update(pair.d_fs, batch_fs, fake_fs,
                                                      pair.weights.lambda_gp, rng_fs);
        pair.opt_d.step();
        out.critic_ffpe = loss_ffpe;
        out.critic_fs = loss_fs;
        out.gp_ffpe = gp_ffpe;
        out.gp_fs = gp_fs;
    }

    pair.opt_g.zero_grad();
    Var e_fs = make_var(batch_fs);
    Var e_ffpe = make_var(batch_ffpe);
    Var g_fs = pair.g.forward(e_fs);
    Var f_ffpe = pair.f.forward(e_ffpe);
    Var adv = add(scale(mean_all(pair.d_ffpe.forward(g_fs)), -1.f),
                  scale(mean_all(pair.d_fs.forward(f_ffpe)), -1.f));
    Var cyc = add(l1_loss(pair.f.forward(g_fs), e_fs),
                  l1_loss(pair.g.forward(f_ffpe), e_ffpe));
    Var loss = add(adv, scale(cyc, pair.weights.lambda_cyc));
    backward(loss);
    // critic params pick up gradients from the generator objective; only the
    // generator optimizer steps, and critics are re-zeroed next round
    pair.opt_g.step();
    out.gen_adv = adv->value[0];
    out.cycle = cyc->value[0];
    out.check_finite();
    return out;
}

// mean L1 cycle error |F(G(e)) - e| over a batch of embeddings
inline float cycle_error(const TranslatorPair& pair, const Tensor& batch_fs) {
    NoGrad ng;
    Var e = make_var(batch_fs);
    Var rec = pair.f.forward(pair.g.forward(e));
    return l1_loss(rec, e)->value[0];
}

}  // namespace f2f
