// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "lsplit/error.hpp"

namespace lsplit {

namespace {

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

void require_2d(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw Error(Errc::dimension, std::string(what) + " must be 2-D, got " + shape_str(t.shape()));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_numel(shape_) != values_.size()) {
        throw Error(Errc::dimension, "shape " + shape_str(shape_) + " does not match " +
                                         std::to_string(values_.size()) + " values");
    }
}

std::size_t Tensor::rows() const {
    if (shape_.empty()) return values_.empty() ? 0 : 1;
    return shape_[0];
}

std::size_t Tensor::cols() const {
    const auto r = rows();
    return r == 0 ? (shape_.size() > 1 ? shape_numel(Shape(shape_.begin() + 1, shape_.end())) : 0)
                  : values_.size() / r;
}

std::span<float> Tensor::row(std::size_t r) {
    const auto c = cols();
    return {values_.data() + r * c, c};
}

std::span<const float> Tensor::row(std::size_t r) const {
    const auto c = cols();
    return {values_.data() + r * c, c};
}

void Tensor::append_rows(const Tensor& other) {
    if (shape_.empty()) {
        *this = other;
        return;
    }
    if (other.rank() != rank() || !std::equal(shape_.begin() + 1, shape_.end(), other.shape_.begin() + 1)) {
        throw Error(Errc::dimension, "cannot append " + shape_str(other.shape_) + " to " + shape_str(shape_));
    }
    values_.insert(values_.end(), other.values_.begin(), other.values_.end());
    shape_[0] += other.shape_[0];
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows()) throw Error(Errc::dimension, "row slice out of range");
    Shape s = shape_;
    s[0] = end - begin;
    const auto c = cols();
    return Tensor(std::move(s), std::vector<float>(values_.begin() + begin * c, values_.begin() + end * c));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), values_); }

bool Tensor::bit_equal(const Tensor& other) const noexcept {
    return shape_ == other.shape_ && values_.size() == other.values_.size() &&
           (values_.empty() || std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0);
}

double Prng::uniform01() {
    // 53 high bits -> double in [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

float Prng::uniform(float lo, float hi) {
    return static_cast<float>(lo + (static_cast<double>(hi) - lo) * uniform01());
}

double Prng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
}

Tensor uniform_tensor(Shape shape, float bound, Prng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul lhs");
    require_2d(b, "matmul rhs");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw Error(Errc::dimension, "matmul inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Tensor c({m, n});
    auto cv = c.values();
    const auto av = a.values();
    const auto bv = b.values();
    // i-t-j order: every c[i,j] still sums t = 0..k-1 in order.
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = cv.data() + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const float aval = av[i * k + t];
            const float* brow = bv.data() + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
        }
    }
    return c;
}

void softmax_inplace(std::span<float> v) {
    if (v.empty()) return;
    float mx = -std::numeric_limits<float>::infinity();
    for (float x : v) {
        if (std::isnan(x)) throw Error(Errc::numeric, "softmax input contains NaN");
        mx = std::max(mx, x);
    }
    float sum = 0.0f;
    for (auto& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (auto& x : v) x /= sum;
}

Tensor softmax(const Tensor& x) {
    Tensor out = x;
    if (out.rank() == 0) return out;
    const auto n = out.shape().back();
    auto vals = out.values();
    for (std::size_t off = 0; off < vals.size(); off += n) softmax_inplace(vals.subspan(off, n));
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    if (x.rank() == 0) throw Error(Errc::dimension, "layer_norm on scalar");
    const auto d = x.shape().back();
    if (d == 0 || gamma.numel() != d || beta.numel() != d) {
        throw Error(Errc::dimension, "layer_norm gamma/beta must have " + std::to_string(d) + " elements");
    }
    Tensor out(x.shape());
    const auto in = x.values();
    auto ov = out.values();
    const auto g = gamma.values();
    const auto b = beta.values();
    const float inv_d = 1.0f / static_cast<float>(d);
    for (std::size_t off = 0; off < in.size(); off += d) {
        float mean = 0.0f;
        for (std::size_t j = 0; j < d; ++j) mean += in[off + j];
        mean *= inv_d;
        float var = 0.0f;
        for (std::size_t j = 0; j < d; ++j) {
            const float c = in[off + j] - mean;
            var += c * c;
        }
        var *= inv_d;
        const float inv_std = 1.0f / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) ov[off + j] = (in[off + j] - mean) * inv_std * g[j] + b[j];
    }
    return out;
}

float gelu(float x) {
    constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

void gelu_inplace(Tensor& x) {
    for (auto& v : x.values()) v = gelu(v);
}

void add_inplace(Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) throw Error(Errc::dimension, "add: shapes differ");
    auto xv = x.values();
    const auto yv = y.values();
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += yv[i];
}

void add_row_bias_inplace(Tensor& x, const Tensor& bias) {
    const auto c = x.cols();
    if (bias.numel() != c) throw Error(Errc::dimension, "bias length does not match columns");
    const auto bv = bias.values();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t j = 0; j < c; ++j) row[j] += bv[j];
    }
}

void KvCache::append(std::span<const float> key, std::span<const float> value) {
    if (key.size() != dim_ || value.size() != dim_) throw Error(Errc::state, "kv cache row width mismatch");
    keys_.insert(keys_.end(), key.begin(), key.end());
    values_.insert(values_.end(), value.begin(), value.end());
}

void KvCache::clear() noexcept {
    keys_.clear();
    values_.clear();
}

Tensor causal_attention(const Tensor& x, KvCache& cache, const AttentionWeights& w) {
    require_2d(x, "attention input");
    const auto d = x.dim(1);
    if (cache.dim() != d) {
        throw Error(Errc::state, "kv cache width " + std::to_string(cache.dim()) + " != model width " + std::to_string(d));
    }
    if (w.heads == 0 || d % w.heads != 0) throw Error(Errc::parameter, "heads must divide model width");
    for (const Tensor* m : {&w.wq, &w.wk, &w.wv, &w.wo}) {
        if (m->shape() != Shape{d, d}) throw Error(Errc::dimension, "attention projection must be D x D");
    }

    const Tensor q = matmul(x, w.wq);
    const Tensor k = matmul(x, w.wk);
    const Tensor v = matmul(x, w.wv);
    const auto start = cache.length();
    for (std::size_t r = 0; r < x.rows(); ++r) cache.append(k.row(r), v.row(r));

    const auto dh = d / w.heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    Tensor mixed({x.rows(), d});
    std::vector<float> scores;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto pos = start + r;
        const auto qrow = q.row(r);
        auto orow = mixed.row(r);
        scores.resize(pos + 1);
        for (std::size_t h = 0; h < w.heads; ++h) {
            const auto off = h * dh;
            for (std::size_t t = 0; t <= pos; ++t) {
                const auto key = cache.key(t);
                float dot = 0.0f;
                for (std::size_t j = 0; j < dh; ++j) dot += qrow[off + j] * key[off + j];
                scores[t] = dot * scale;
            }
            softmax_inplace(scores);
            for (std::size_t t = 0; t <= pos; ++t) {
                const auto val = cache.value(t);
                const float p = scores[t];
                for (std::size_t j = 0; j < dh; ++j) orow[off + j] += p * val[off + j];
            }
        }
    }
    return matmul(mixed, w.wo);
}

Tensor causal_attention_step(const Tensor& x, KvCache& cache, const AttentionWeights& w) {
    if (x.rank() != 2 || x.dim(0) != 1) throw Error(Errc::dimension, "attention step expects a 1 x D input");
    return causal_attention(x, cache, w);
}

}  // namespace lsplit
