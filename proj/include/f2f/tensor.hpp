#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace f2f {

// Dense row-major float tensor. Rank is dynamic; most of the codebase uses
// rank 1 (vectors), 2 (matrices / batches of embeddings) and 3 (C,H,W images
// and latents).
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s, float fill = 0.f)
        : shape(std::move(s)), data(numel_of(shape), fill) {}

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // (C,H,W) accessor
    float& at3(int64_t c, int64_t y, int64_t x) {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    float at3(int64_t c, int64_t y, int64_t x) const {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    // (rows,cols) accessor
    float& at2(int64_t r, int64_t c) {
        return data[static_cast<size_t>(r * shape[1] + c)];
    }
    float at2(int64_t r, int64_t c) const {
        return data[static_cast<size_t>(r * shape[1] + c)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    float l2_norm() const {
        double s = 0;
        for (float v : data) s += double(v) * v;
        return static_cast<float>(std::sqrt(s));
    }

    float mean() const {
        if (data.empty()) return 0.f;
        double s = std::accumulate(data.begin(), data.end(), 0.0);
        return static_cast<float>(s / double(data.size()));
    }

    Tensor reshaped(std::vector<int64_t> s) const {
        if (numel_of(s) != numel()) throw std::invalid_argument("reshape numel mismatch");
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    static std::string shape_str(const std::vector<int64_t>& s) {
        std::string out = "(";
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
};

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("tensor add shape mismatch");
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("tensor sub shape mismatch");
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor operator*(const Tensor& a, float s) {
    Tensor out = a;
    for (float& v : out.data) v *= s;
    return out;
}

inline Tensor operator*(float s, const Tensor& a) { return a * s; }

inline float dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("dot numel mismatch");
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) s += double(a[i]) * b[i];
    return static_cast<float>(s);
}

}  // namespace f2f
