// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsplit/tensor.hpp"

namespace lsplit {

using Bytes = std::vector<std::uint8_t>;

struct QuantParams {
    std::uint8_t bits = 8;
    float scale = 1.0f;
    std::int32_t zero_point = 0;

    bool operator==(const QuantParams&) const = default;
};

bool is_supported_bit_width(int bits) noexcept;
std::int32_t quant_levels(int bits) noexcept;  // 2^bits - 1

/// Bytes needed to hold `count` values of `bits` each.
std::size_t packed_size(std::size_t count, int bits) noexcept;

struct QuantizedTensor {
    Bytes packed;
    QuantParams params;
};

/// Affine quantization with per-tensor min/max range.
///
/// scale = (max - min) / (2^bits - 1), zero_point = round(-min / scale), and
/// q = clamp(round(x / scale) + zero_point). Rounding is half away from zero
/// and the ratios are evaluated in double precision against the exact range,
/// so boundary cases such as {-1, 0, 1} land on {0, 128, 255} at 8 bits.
/// A constant tensor c is encoded with scale |c| and q - zero_point = sign(c),
/// which reconstructs it exactly.
QuantizedTensor quantize_affine(const Tensor& x, int bits);

/// Quantize against fixed parameters (q = clamp(round(x / scale) + zero_point)).
Bytes quantize_with_params(const Tensor& x, const QuantParams& params);

Tensor dequantize_affine(std::span<const std::uint8_t> packed, const QuantParams& params, const Shape& shape);

// LSB-first bit packing of unsigned codes.
Bytes pack_bits(std::span<const std::uint32_t> codes, int bits);
std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t count, int bits);

// IEEE 754 binary16, round to nearest even. Out-of-range magnitudes saturate
// to +-65504 instead of becoming infinity.
std::uint16_t float_to_half(float x) noexcept;
float half_to_float(std::uint16_t h) noexcept;

std::vector<std::uint16_t> to_fp16(const Tensor& x);
Tensor from_fp16(std::span<const std::uint16_t> halves, const Shape& shape);

/// to_fp16 followed by from_fp16.
Tensor round_trip_fp16(const Tensor& x);

}  // namespace lsplit
