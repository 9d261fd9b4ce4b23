#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "f2f/tensor.hpp"

namespace f2f {

// Minimal reverse-mode autodiff over Tensor. Graphs are rebuilt each step,
// which is cheap at these model sizes; nodes own their parents and a backward
// closure, and backward() walks the graph in reverse topological order.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.shape != value.shape) grad = Tensor(value.shape, 0.f);
        return grad;
    }
    void zero_grad() {
        if (grad.shape == value.shape)
            std::fill(grad.data.begin(), grad.data.end(), 0.f);
    }
};

namespace detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

struct NoGrad {
    bool prev;
    NoGrad() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGrad() { detail::grad_mode() = prev; }
};

inline bool grad_enabled() { return detail::grad_mode(); }

inline Var make_var(Tensor t, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

inline Var make_param(Tensor t) { return make_var(std::move(t), true); }

namespace detail {

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_mode()) {
        bool any = false;
        for (auto& p : parents)
            if (p->requires_grad) any = true;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(bw);
        }
    }
    return n;
}

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

}  // namespace detail

// ---- backward driver ----

inline void backward(const Var& root, const Tensor* seed = nullptr) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    Tensor& g = root->ensure_grad();
    if (seed) {
        if (seed->shape != g.shape) throw std::invalid_argument("backward seed shape mismatch");
        g = *seed;
    } else {
        if (root->value.numel() != 1)
            throw std::invalid_argument("backward() without seed requires scalar root");
        g[0] = 1.f;
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---- elementwise ops ----

inline Var add(const Var& a, const Var& b) {
    return detail::make_op(a->value + b->value, {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Var& p = n.parents[k];
            if (!p->requires_grad) continue;
            Tensor& pg = p->ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    return detail::make_op(a->value - b->value, {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& pg = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& pg = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] -= n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul shape mismatch");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& pg = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& pg = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, float s) {
    return detail::make_op(a->value * s, {a}, [s](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i] * s;
    });
}

inline Var leaky_relu(const Var& a, float slope = 0.2f) {
    Tensor out = a->value;
    for (float& v : out.data) v = v > 0.f ? v : slope * v;
    return detail::make_op(std::move(out), {a}, [slope](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& x = n.parents[0]->value;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            pg[i] += n.grad[i] * (x[i] > 0.f ? 1.f : slope);
    });
}

inline Var silu(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v = v / (1.f + std::exp(-v));
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& x = n.parents[0]->value;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            float s = 1.f / (1.f + std::exp(-x[i]));
            pg[i] += n.grad[i] * (s + x[i] * s * (1.f - s));
        }
    });
}

inline Var exp_op(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v = std::exp(v);
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i] * n.value[i];
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v = 1.f / (1.f + std::exp(-v));
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& y = n.value;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            pg[i] += n.grad[i] * y[i] * (1.f - y[i]);
    });
}

// ---- shape ops ----

inline Var reshape(const Var& a, std::vector<int64_t> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return detail::make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i];
    });
}

inline Var concat1d(const Var& a, const Var& b) {
    if (a->value.rank() != 1 || b->value.rank() != 1)
        throw std::invalid_argument("concat1d expects rank-1");
    Tensor out({a->value.numel() + b->value.numel()});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(),
              out.data.begin() + a->value.data.size());
    int64_t na = a->value.numel();
    return detail::make_op(std::move(out), {a, b}, [na](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& pg = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < na; ++i) pg[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& pg = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += n.grad[na + i];
        }
    });
}

// channel slice of a (C,H,W) tensor
inline Var slice_channels(const Var& a, int64_t c0, int64_t c1) {
    const Tensor& x = a->value;
    if (x.rank() != 3) throw std::invalid_argument("slice_channels expects (C,H,W)");
    int64_t H = x.shape[1], W = x.shape[2];
    Tensor out({c1 - c0, H, W});
    std::copy(x.data.begin() + c0 * H * W, x.data.begin() + c1 * H * W, out.data.begin());
    return detail::make_op(std::move(out), {a}, [c0, H, W](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        int64_t off = c0 * H * W;
        for (int64_t i = 0; i < n.grad.numel(); ++i) pg[off + i] += n.grad[i];
    });
}

// ---- dense algebra ----

// x: (in) or (m,in); W: (out,in); b: (out)
inline Var linear(const Var& x, const Var& W, const Var& b) {
    const Tensor& xv = x->value;
    const Tensor& Wv = W->value;
    int64_t out_dim = Wv.shape[0], in_dim = Wv.shape[1];
    bool batched = xv.rank() == 2;
    int64_t m = batched ? xv.shape[0] : 1;
    if ((batched ? xv.shape[1] : xv.numel()) != in_dim)
        throw std::invalid_argument("linear: input dim " + Tensor::shape_str(xv.shape) +
                                    " vs weight " + Tensor::shape_str(Wv.shape));
    Tensor out(batched ? std::vector<int64_t>{m, out_dim} : std::vector<int64_t>{out_dim});
    {
        detail::CMapMat X(xv.ptr(), m, in_dim), Wm(Wv.ptr(), out_dim, in_dim);
        detail::MapMat Y(out.ptr(), m, out_dim);
        Y.noalias() = X * Wm.transpose();
        if (b) {
            detail::CMapMat B(b->value.ptr(), 1, out_dim);
            Y.rowwise() += B.row(0);
        }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, W, b} : std::vector<Var>{x, W};
    return detail::make_op(std::move(out), std::move(parents),
                           [m, in_dim, out_dim](Node& n) {
        detail::CMapMat dY(n.grad.ptr(), m, out_dim);
        Var& xp = n.parents[0];
        Var& Wp = n.parents[1];
        detail::CMapMat X(xp->value.ptr(), m, in_dim), Wm(Wp->value.ptr(), out_dim, in_dim);
        if (xp->requires_grad) {
            detail::MapMat dX(xp->ensure_grad().ptr(), m, in_dim);
            dX.noalias() += dY * Wm;
        }
        if (Wp->requires_grad) {
            detail::MapMat dW(Wp->ensure_grad().ptr(), out_dim, in_dim);
            dW.noalias() += dY.transpose() * X;
        }
        if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
            detail::MapMat dB(n.parents[2]->ensure_grad().ptr(), 1, out_dim);
            dB.row(0) += dY.colwise().sum();
        }
    });
}

// ---- convolution (single sample, CHW) ----

namespace detail {

inline void im2col(const Tensor& x, int k, int stride, int pad, Tensor& col,
                   int64_t oh, int64_t ow) {
    int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    float* cp = col.ptr();
    for (int64_t c = 0; c < C; ++c)
        for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
                const float* xc = x.ptr() + c * H * W;
                for (int64_t y = 0; y < oh; ++y) {
                    int64_t sy = y * stride + dy - pad;
                    for (int64_t x2 = 0; x2 < ow; ++x2) {
                        int64_t sx = x2 * stride + dx - pad;
                        *cp++ = (sy >= 0 && sy < H && sx >= 0 && sx < W)
                                    ? xc[sy * W + sx] : 0.f;
                    }
                }
            }
}

inline void col2im_add(const Tensor& col, int k, int stride, int pad, Tensor& dx,
                       int64_t oh, int64_t ow) {
    int64_t C = dx.shape[0], H = dx.shape[1], W = dx.shape[2];
    const float* cp = col.ptr();
    for (int64_t c = 0; c < C; ++c)
        for (int dy = 0; dy < k; ++dy)
            for (int dx_ = 0; dx_ < k; ++dx_) {
                float* xc = dx.ptr() + c * H * W;
                for (int64_t y = 0; y < oh; ++y) {
                    int64_t sy = y * stride + dy - pad;
                    for (int64_t x2 = 0; x2 < ow; ++x2) {
                        int64_t sx = x2 * stride + dx_ - pad;
                        float v = *cp++;
                        if (sy >= 0 && sy < H && sx >= 0 && sx < W) xc[sy * W + sx] += v;
                    }
                }
            }
}

}  // namespace detail

// x: (C,H,W); W: (O,C,k,k); b: (O). Same-size output for stride 1, pad k/2.
inline Var conv2d(const Var& x, const Var& W, const Var& b, int stride = 1, int pad = -1) {
    const Tensor& xv = x->value;
    const Tensor& Wv = W->value;
    if (xv.rank() != 3 || Wv.rank() != 4) throw std::invalid_argument("conv2d rank");
    int64_t C = xv.shape[0], H = xv.shape[1], Wd = xv.shape[2];
    int64_t O = Wv.shape[0];
    int k = static_cast<int>(Wv.shape[2]);
    if (Wv.shape[1] != C)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(C) +
                                    " vs weight " + std::to_string(Wv.shape[1]));
    if (pad < 0) pad = k / 2;
    int64_t oh = (H + 2 * pad - k) / stride + 1;
    int64_t ow = (Wd + 2 * pad - k) / stride + 1;
    int64_t K = C * k * k;
    Tensor col({K, oh * ow});
    detail::im2col(xv, k, stride, pad, col, oh, ow);
    Tensor out({O, oh, ow});
    {
        detail::CMapMat Wm(Wv.ptr(), O, K), Cm(col.ptr(), K, oh * ow);
        detail::MapMat Y(out.ptr(), O, oh * ow);
        Y.noalias() = Wm * Cm;
        if (b) {
            const float* bp = b->value.ptr();
            for (int64_t o = 0; o < O; ++o) Y.row(o).array() += bp[o];
        }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, W, b} : std::vector<Var>{x, W};
    auto col_keep = std::make_shared<Tensor>(std::move(col));
    return detail::make_op(std::move(out), std::move(parents),
                           [col_keep, k, stride, pad, O, K, oh, ow](Node& n) {
        detail::CMapMat dY(n.grad.ptr(), O, oh * ow);
        Var& xp = n.parents[0];
        Var& Wp = n.parents[1];
        if (Wp->requires_grad) {
            detail::CMapMat Cm(col_keep->ptr(), K, oh * ow);
            detail::MapMat dW(Wp->ensure_grad().ptr(), O, K);
            dW.noalias() += dY * Cm.transpose();
        }
        if (xp->requires_grad) {
            Tensor dcol({K, oh * ow});
            detail::CMapMat Wm(Wp->value.ptr(), O, K);
            detail::MapMat dCm(dcol.ptr(), K, oh * ow);
            dCm.noalias() = Wm.transpose() * dY;
            detail::col2im_add(dcol, k, stride, pad, xp->ensure_grad(), oh, ow);
        }
        if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
            Tensor& db = n.parents[2]->ensure_grad();
            for (int64_t o = 0; o < O; ++o) {
                double s = 0;
                const float* g = n.grad.ptr() + o * oh * ow;
                for (int64_t i = 0; i < oh * ow; ++i) s += g[i];
                db[o] += static_cast<float>(s);
            }
        }
    });
}

inline Var upsample_nearest2(const Var& a) {
    const Tensor& x = a->value;
    int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    Tensor out({C, H * 2, W * 2});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H * 2; ++y)
            for (int64_t xx = 0; xx < W * 2; ++xx)
                out.at3(c, y, xx) = x.at3(c, y / 2, xx / 2);
    return detail::make_op(std::move(out), {a}, [C, H, W](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < H * 2; ++y)
                for (int64_t xx = 0; xx < W * 2; ++xx)
                    pg.at3(c, y / 2, xx / 2) += n.grad.at3(c, y, xx);
    });
}

// add a per-channel bias vector (C) to a (C,H,W) map
inline Var add_channel_bias(const Var& x, const Var& v) {
    const Tensor& xv = x->value;
    int64_t C = xv.shape[0], HW = xv.shape[1] * xv.shape[2];
    if (v->value.numel() != C) throw std::invalid_argument("add_channel_bias dim");
    Tensor out = xv;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < HW; ++i) out[c * HW + i] += v->value[c];
    return detail::make_op(std::move(out), {x, v}, [C, HW](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& pg = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < n.grad.numel(); ++i) pg[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& pg = n.parents[1]->ensure_grad();
            for (int64_t c = 0; c < C; ++c) {
                double s = 0;
                for (int64_t i = 0; i < HW; ++i) s += n.grad[c * HW + i];
                pg[c] += static_cast<float>(s);
            }
        }
    });
}

inline Var global_avg_pool(const Var& x) {
    const Tensor& xv = x->value;
    int64_t C = xv.shape[0], HW = xv.shape[1] * xv.shape[2];
    Tensor out({C});
    for (int64_t c = 0; c < C; ++c) {
        double s = 0;
        for (int64_t i = 0; i < HW; ++i) s += xv[c * HW + i];
        out[c] = static_cast<float>(s / double(HW));
    }
    return detail::make_op(std::move(out), {x}, [C, HW](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        for (int64_t c = 0; c < C; ++c) {
            float g = n.grad[c] / float(HW);
            for (int64_t i = 0; i < HW; ++i) pg[c * HW + i] += g;
        }
    });
}

// ---- reductions / losses ----

inline Var mean_all(const Var& a) {
    Tensor out({1});
    out[0] = a->value.mean();
    int64_t n_el = a->value.numel();
    return detail::make_op(std::move(out), {a}, [n_el](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        float g = n.grad[0] / float(n_el);
        for (int64_t i = 0; i < n_el; ++i) pg[i] += g;
    });
}

inline Var mse_loss(const Var& pred, const Var& target) {
    if (!pred->value.same_shape(target->value))
        throw std::invalid_argument("mse shape mismatch");
    int64_t n_el = pred->value.numel();
    Tensor out({1});
    double s = 0;
    for (int64_t i = 0; i < n_el; ++i) {
        double d = double(pred->value[i]) - target->value[i];
        s += d * d;
    }
    out[0] = static_cast<float>(s / double(n_el));
    return detail::make_op(std::move(out), {pred, target}, [n_el](Node& n) {
        const Tensor& p = n.parents[0]->value;
        const Tensor& t = n.parents[1]->value;
        float g = 2.f * n.grad[0] / float(n_el);
        if (n.parents[0]->requires_grad) {
            Tensor& pg = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < n_el; ++i) pg[i] += g * (p[i] - t[i]);
        }
        if (n.parents[1]->requires_grad) {
            Tensor& pg = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < n_el; ++i) pg[i] -= g * (p[i] - t[i]);
        }
    });
}

inline Var l1_loss(const Var& pred, const Var& target) {
    if (!pred->value.same_shape(target->value))
        throw std::invalid_argument("l1 shape mismatch");
    int64_t n_el = pred->value.numel();
    Tensor out({1});
    double s = 0;
    for (int64_t i = 0; i < n_el; ++i) s += std::abs(double(pred->value[i]) - target->value[i]);
    out[0] = static_cast<float>(s / double(n_el));
    return detail::make_op(std::move(out), {pred, target}, [n_el](Node& n) {
        const Tensor& p = n.parents[0]->value;
        const Tensor& t = n.parents[1]->value;
        float g = n.grad[0] / float(n_el);
        for (int k = 0; k < 2; ++k) {
            if (!n.parents[k]->requires_grad) continue;
            Tensor& pg = n.parents[k]->ensure_grad();
            float sgn = k == 0 ? 1.f : -1.f;
            for (int64_t i = 0; i < n_el; ++i) {
                float d = p[i] - t[i];
                pg[i] += sgn * g * (d > 0.f ? 1.f : (d < 0.f ? -1.f : 0.f));
            }
        }
    });
}

// logits: rank-1 (k) or rank-2 (m,k) with one label per row
inline Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const Tensor& lv = logits->value;
    bool batched = lv.rank() == 2;
    int64_t m = batched ? lv.shape[0] : 1;
    int64_t k = batched ? lv.shape[1] : lv.numel();
    if (static_cast<int64_t>(labels.size()) != m)
        throw std::invalid_argument("label count mismatch");
    Tensor probs = lv;
    double total = 0;
    for (int64_t r = 0; r < m; ++r) {
        float* row = probs.ptr() + r * k;
        float mx = *std::max_element(row, row + k);
        double z = 0;
        for (int64_t j = 0; j < k; ++j) z += std::exp(double(row[j]) - mx);
        for (int64_t j = 0; j < k; ++j) row[j] = static_cast<float>(std::exp(double(row[j]) - mx) / z);
        total -= std::log(std::max(double(row[labels[r]]), 1e-12));
    }
    Tensor out({1});
    out[0] = static_cast<float>(total / double(m));
    auto probs_keep = std::make_shared<Tensor>(std::move(probs));
    return detail::make_op(std::move(out), {logits}, [probs_keep, labels, m, k](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        float g = n.grad[0] / float(m);
        for (int64_t r = 0; r < m; ++r)
            for (int64_t j = 0; j < k; ++j) {
                float p = (*probs_keep)[r * k + j];
                pg[r * k + j] += g * (p - (j == labels[r] ? 1.f : 0.f));
            }
    });
}

}  // namespace f2f
