#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "f2f/autograd.hpp"
#include "f2f/rng.hpp"

namespace f2f {
namespace nn {

struct NamedParam {
    std::string name;
    Var var;
};

using ParamList = std::vector<NamedParam>;

// Low-rank additive adapter on a linear layer. up is zero-initialized so a
// freshly installed adapter leaves the layer's output unchanged.
struct LoraAdapter {
    Var down;  // (rank, in)
    Var up;    // (out, rank)
    int rank = 0;
    float scale = 1.f;
};

struct Linear {
    Var W;  // (out, in)
    Var b;  // (out)
    std::optional<LoraAdapter> lora;

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng, bool zero_init = false) {
        float std = zero_init ? 0.f : std::sqrt(2.f / float(in));
        W = make_param(rng.normal_tensor({out, in}, std));
        b = make_param(Tensor({out}, 0.f));
    }

    int64_t in_dim() const { return W->value.shape[1]; }
    int64_t out_dim() const { return W->value.shape[0]; }

    void install_lora(int rank, Rng& rng, float scale = 1.f) {
        if (rank < 1) throw std::invalid_argument("lora rank must be >= 1");
        if (rank > std::min(in_dim(), out_dim()))
            throw std::invalid_argument("lora rank " + std::to_string(rank) +
                                        " exceeds layer min dim " +
                                        std::to_string(std::min(in_dim(), out_dim())));
        LoraAdapter a;
        a.rank = rank;
        a.scale = scale;
        a.down = make_param(rng.normal_tensor({rank, in_dim()}, 1.f / std::sqrt(float(in_dim()))));
        a.up = make_param(Tensor({out_dim(), rank}, 0.f));
        lora = std::move(a);
    }

    Var forward(const Var& x) const {
        Var y = linear(x, W, b);
        if (lora) {
            Var h = linear(x, lora->down, Var{});
            Var delta = linear(h, lora->up, Var{});
            y = add(y, lora->scale == 1.f ? delta : scale(delta, lora->scale));
        }
        return y;
    }

    void params(ParamList& out, const std::string& prefix) const {
        out.push_back({prefix + ".W", W});
        out.push_back({prefix + ".b", b});
        if (lora) {
            out.push_back({prefix + ".lora_down", lora->down});
            out.push_back({prefix + ".lora_up", lora->up});
        }
    }
};

struct Conv2d {
    Var W;  // (out, in, k, k)
    Var b;  // (out)
    int stride = 1;

    Conv2d() = default;
    Conv2d(int64_t in, int64_t out, int k, int stride_, Rng& rng, bool zero_init = false)
        : stride(stride_) {
        float std = zero_init ? 0.f : std::sqrt(2.f / float(in * k * k));
        W = make_param(rng.normal_tensor({out, in, k, k}, std));
        b = make_param(Tensor({out}, 0.f));
    }

    Var forward(const Var& x) const { return conv2d(x, W, b, stride); }

    void params(ParamList& out, const std::string& prefix) const {
        out.push_back({prefix + ".W", W});
        out.push_back({prefix + ".b", b});
    }
};

// Adam with optional decoupled weight decay.
struct Adam {
    struct Slot {
        Tensor m, v;
    };
    std::vector<Var> params;
    std::vector<Slot> slots;
    float lr = 1e-4f, beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f, weight_decay = 0.f;
    int64_t step_count = 0;

    Adam() = default;
    Adam(std::vector<Var> ps, float lr_, float b1, float b2, float wd = 0.f)
        : params(std::move(ps)), lr(lr_), beta1(b1), beta2(b2), weight_decay(wd) {
        slots.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            slots[i].m = Tensor(params[i]->value.shape, 0.f);
            slots[i].v = Tensor(params[i]->value.shape, 0.f);
        }
    }

    void zero_grad() {
        for (auto& p : params) p->zero_grad();
    }

    void step() {
        ++step_count;
        float bc1 = 1.f - std::pow(beta1, float(step_count));
        float bc2 = 1.f - std::pow(beta2, float(step_count));
        for (size_t i = 0; i < params.size(); ++i) {
            Var& p = params[i];
            if (p->grad.shape != p->value.shape) continue;  // never touched
            Slot& s = slots[i];
            for (int64_t j = 0; j < p->value.numel(); ++j) {
                float g = p->grad[j];
                s.m[j] = beta1 * s.m[j] + (1.f - beta1) * g;
                s.v[j] = beta2 * s.v[j] + (1.f - beta2) * g * g;
                float mh = s.m[j] / bc1;
                float vh = s.v[j] / bc2;
                float upd = mh / (std::sqrt(vh) + eps);
                if (weight_decay > 0.f) upd += weight_decay * p->value[j];
                p->value[j] -= lr * upd;
            }
        }
    }
};

inline std::vector<Var> vars_of(const ParamList& list) {
    std::vector<Var> out;
    out.reserve(list.size());
    for (auto& np : list) out.push_back(np.var);
    return out;
}

}  // namespace nn
}  // namespace f2f
