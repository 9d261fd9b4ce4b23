#pragma once

#include <cstdint>
#include <random>

#include "f2f/tensor.hpp"

namespace f2f {

// splitmix64 finalizer; used to derive independent child seeds from
// (seed, index...) tuples so parallel work items stay reproducible.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a) { return mix64(seed ^ mix64(a)); }
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
    return mix64(derive_seed(seed, a) ^ mix64(b + 0x517cc1b727220a95ull));
}

struct Rng {
    std::mt19937_64 gen;

    explicit Rng(uint64_t seed = 0) : gen(seed) {}

    float uniform(float lo = 0.f, float hi = 1.f) {
        std::uniform_real_distribution<float> d(lo, hi);
        return d(gen);
    }
    float normal(float mean = 0.f, float stddev = 1.f) {
        std::normal_distribution<float> d(mean, stddev);
        return d(gen);
    }
    int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive
        std::uniform_int_distribution<int64_t> d(lo, hi);
        return d(gen);
    }

    Tensor normal_tensor(std::vector<int64_t> shape, float stddev = 1.f) {
        Tensor t(std::move(shape));
        for (float& v : t.data) v = normal(0.f, stddev);
        return t;
    }
    Tensor uniform_tensor(std::vector<int64_t> shape, float lo, float hi) {
        Tensor t(std::move(shape));
        for (float& v : t.data) v = uniform(lo, hi);
        return t;
    }
};

}  // namespace f2f
