// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace lsplit {

using Shape = std::vector<std::size_t>;

/// Element encodings. Compute is always FP32; the other two only exist on the wire.
enum class DType : std::uint8_t { fp32 = 0, fp16 = 1, int_packed = 2 };

std::size_t shape_numel(const Shape& shape);

/// Dense row-major FP32 tensor.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    std::span<float> values() noexcept { return values_; }
    std::span<const float> values() const noexcept { return values_; }

    // 2-D views: a tensor of rank >= 1 is treated as dim(0) rows of numel/dim(0) columns.
    std::size_t rows() const;
    std::size_t cols() const;
    std::span<float> row(std::size_t r);
    std::span<const float> row(std::size_t r) const;
    float& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    float operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    void append_rows(const Tensor& other);
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    Tensor reshaped(Shape shape) const;

    /// Bitwise equality of shape and every element.
    bool bit_equal(const Tensor& other) const noexcept;

private:
    Shape shape_;
    std::vector<float> values_;
};

struct PrngSeed {
    std::uint64_t value = 0;
};

/// Seeded stream. Uniforms are built from the raw 64-bit engine output so the
/// stream does not depend on the standard library's distribution classes.
class Prng {
public:
    explicit Prng(PrngSeed seed) : engine_(seed.value) {}

    double uniform01();  // [0, 1)
    float uniform(float lo, float hi);
    double normal();  // Box-Muller

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

Tensor uniform_tensor(Shape shape, float bound, Prng& rng);

// --- kernels -----------------------------------------------------------

/// c[i,j] = sum_t a[i,t] * b[t,j], accumulated left to right in FP32.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Softmax along the last axis with max subtraction.
Tensor softmax(const Tensor& x);
void softmax_inplace(std::span<float> v);

inline constexpr float kLayerNormEps = 1e-5f;

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = kLayerNormEps);

/// tanh-approximated GELU.
float gelu(float x);
void gelu_inplace(Tensor& x);

void add_inplace(Tensor& x, const Tensor& y);
void add_row_bias_inplace(Tensor& x, const Tensor& bias);

// --- attention ---------------------------------------------------------

struct AttentionWeights {
    Tensor wq, wk, wv, wo;  // each D x D
    std::size_t heads = 1;
};

/// Keys and values of every position seen so far by one attention block.
class KvCache {
public:
    KvCache() = default;
    explicit KvCache(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t length() const noexcept { return dim_ == 0 ? 0 : keys_.size() / dim_; }
    std::span<const float> key(std::size_t pos) const { return {keys_.data() + pos * dim_, dim_}; }
    std::span<const float> value(std::size_t pos) const { return {values_.data() + pos * dim_, dim_}; }

    void append(std::span<const float> key, std::span<const float> value);
    void clear() noexcept;

private:
    std::size_t dim_ = 0;
    std::vector<float> keys_;
    std::vector<float> values_;
};

/// Multi-head causal self-attention over `x` (r x D) for positions
/// cache.length() .. cache.length()+r-1. Appends the new keys/values to the
/// cache. Each row is computed by the same per-position kernel, so stepping
/// one row at a time and processing a batch produce identical bits.
Tensor causal_attention(const Tensor& x, KvCache& cache, const AttentionWeights& w);

/// Single-position form of causal_attention; `x` must be 1 x D.
Tensor causal_attention_step(const Tensor& x, KvCache& cache, const AttentionWeights& w);

}  // namespace lsplit
