#include <catch2/catch_amalgamated.hpp>

#include "f2f/autograd.hpp"
#include "f2f/nn.hpp"
#include "f2f/rng.hpp"

using namespace f2f;

namespace {

// central finite differences on one parameter of a scalar-valued graph
void gradcheck(const std::function<Var()>& build_loss, const Var& param,
               float h = 1e-3f, float tol = 2e-2f) {
    Var loss = build_loss();
    for (auto& p : std::vector<Var>{param}) p->zero_grad();
    backward(loss);
    Tensor analytic = param->grad;
    REQUIRE(analytic.shape == param->value.shape);
    for (int64_t i = 0; i < param->value.numel(); ++i) {
        float orig = param->value[i];
        param->value[i] = orig + h;
        float up = build_loss()->value[0];
        param->value[i] = orig - h;
        float dn = build_loss()->value[0];
        param->value[i] = orig;
        float numeric = (up - dn) / (2.f * h);
        REQUIRE_THAT(analytic[i],
                     Catch::Matchers::WithinAbs(numeric, tol * (1.f + std::abs(numeric))));
    }
}

}  // namespace

TEST_CASE("linear layer gradients match finite differences") {
    Rng rng(7);
    Var W = make_param(rng.normal_tensor({4, 5}, 0.5f));
    Var b = make_param(rng.normal_tensor({4}, 0.5f));
    Var x = make_param(rng.normal_tensor({3, 5}, 1.f));
    Var t = make_var(rng.normal_tensor({3, 4}, 1.f));
    auto loss = [&] { return mse_loss(leaky_relu(linear(x, W, b)), t); };
    gradcheck(loss, W);
    gradcheck(loss, b);
    gradcheck(loss, x);
}

TEST_CASE("conv2d gradients match finite differences (stride 1 and 2)") {
    Rng rng(11);
    for (int stride : {1, 2}) {
        Var W = make_param(rng.normal_tensor({3, 2, 3, 3}, 0.3f));
        Var b = make_param(rng.normal_tensor({3}, 0.3f));
        Var x = make_param(rng.normal_tensor({2, 6, 6}, 1.f));
        auto loss = [&] { return mean_all(mul(conv2d(x, W, b, stride), conv2d(x, W, b, stride))); };
        gradcheck(loss, W);
        gradcheck(loss, b);
        gradcheck(loss, x);
    }
}

TEST_CASE("upsample, pooling, channel bias and slice gradients") {
    Rng rng(13);
    Var x = make_param(rng.normal_tensor({4, 4, 4}, 1.f));
    Var v = make_param(rng.normal_tensor({2}, 1.f));
    auto loss = [&] {
        Var half = slice_channels(x, 0, 2);
        Var withb = add_channel_bias(half, v);
        Var up = upsample_nearest2(silu(withb));
        Var pooled = global_avg_pool(up);
        return mul(mean_all(pooled), mean_all(pooled));
    };
    gradcheck(loss, x);
    gradcheck(loss, v);
}

TEST_CASE("softmax cross entropy and l1 gradients") {
    Rng rng(17);
    Var logits = make_param(rng.normal_tensor({4, 3}, 1.f));
    std::vector<int> labels{0, 2, 1, 1};
    gradcheck([&] { return softmax_cross_entropy(logits, labels); }, logits);

    Var a = make_param(rng.normal_tensor({10}, 1.f));
    Var t = make_var(rng.normal_tensor({10}, 1.f));
    gradcheck([&] { return l1_loss(a, t); }, a);
}

TEST_CASE("concat1d routes gradients to both sides") {
    Rng rng(19);
    Var a = make_param(rng.normal_tensor({3}, 1.f));
    Var b = make_param(rng.normal_tensor({5}, 1.f));
    auto loss = [&] {
        Var c = concat1d(a, b);
        return mul(mean_all(c), mean_all(c));
    };
    gradcheck(loss, a);
    gradcheck(loss, b);
}

TEST_CASE("NoGrad suppresses graph construction") {
    Rng rng(23);
    Var W = make_param(rng.normal_tensor({2, 2}, 1.f));
    Var x = make_var(rng.normal_tensor({2}, 1.f));
    NoGrad guard;
    Var y = linear(x, W, Var{});
    REQUIRE_FALSE(y->requires_grad);
    REQUIRE(y->parents.empty());
}

TEST_CASE("adam reduces a convex objective") {
    Rng rng(29);
    Var w = make_param(rng.normal_tensor({8}, 1.f));
    Var target = make_var(rng.normal_tensor({8}, 1.f));
    nn::Adam opt({w}, 0.05f, 0.9f, 0.999f);
    float first = mse_loss(w, target)->value[0];
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        Var loss = mse_loss(w, target);
        backward(loss);
        opt.step();
    }
    float last = mse_loss(w, target)->value[0];
    REQUIRE(last < 0.01f * first);
}
