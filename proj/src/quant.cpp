// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/quant.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "lsplit/error.hpp"

namespace lsplit {

bool is_supported_bit_width(int bits) noexcept { return bits == 2 || bits == 4 || bits == 6 || bits == 8; }

std::int32_t quant_levels(int bits) noexcept { return (std::int32_t{1} << bits) - 1; }

std::size_t packed_size(std::size_t count, int bits) noexcept {
    return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

namespace {

void require_bits(int bits) {
    if (!is_supported_bit_width(bits)) {
        throw Error(Errc::parameter, "unsupported bit width " + std::to_string(bits) + " (expected 2, 4, 6 or 8)");
    }
}

void require_params(const QuantParams& p) {
    require_bits(p.bits);
    if (!(p.scale > 0.0f) || !std::isfinite(p.scale)) throw Error(Errc::parameter, "quant scale must be finite and > 0");
    if (p.zero_point < 0 || p.zero_point > quant_levels(p.bits)) {
        throw Error(Errc::parameter, "zero_point outside [0, 2^bits - 1]");
    }
}

std::uint32_t clamp_code(double v, std::int32_t levels) {
    return static_cast<std::uint32_t>(std::clamp(v, 0.0, static_cast<double>(levels)));
}

}  // namespace

Bytes pack_bits(std::span<const std::uint32_t> codes, int bits) {
    require_bits(bits);
    Bytes out(packed_size(codes.size(), bits), 0);
    std::size_t bitpos = 0;
    for (auto code : codes) {
        for (int b = 0; b < bits; ++b, ++bitpos) {
            if ((code >> b) & 1u) out[bitpos >> 3] |= static_cast<std::uint8_t>(1u << (bitpos & 7));
        }
    }
    return out;
}

std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t count, int bits) {
    require_bits(bits);
    if (packed.size() != packed_size(count, bits)) {
        throw Error(Errc::frame, "packed payload is " + std::to_string(packed.size()) + " bytes, expected " +
                                     std::to_string(packed_size(count, bits)));
    }
    std::vector<std::uint32_t> codes(count, 0);
    std::size_t bitpos = 0;
    for (auto& code : codes) {
        for (int b = 0; b < bits; ++b, ++bitpos) {
            code |= static_cast<std::uint32_t>((packed[bitpos >> 3] >> (bitpos & 7)) & 1u) << b;
        }
    }
    return codes;
}

QuantizedTensor quantize_affine(const Tensor& x, int bits) {
    require_bits(bits);
    const auto vals = x.values();
    for (float v : vals) {
        if (!std::isfinite(v)) throw Error(Errc::numeric, "cannot quantize non-finite values");
    }
    const std::int32_t levels = quant_levels(bits);
    QuantizedTensor out;
    out.params.bits = static_cast<std::uint8_t>(bits);
    std::vector<std::uint32_t> codes(vals.size(), 0);

    if (vals.empty()) {
        out.packed = pack_bits(codes, bits);
        return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
    const double lo = *lo_it;
    const double hi = *hi_it;

    if (lo == hi) {
        // q - zero_point = sign(c), scale = |c|
        if (lo == 0.0) {
            out.params.scale = 1.0f;
            out.params.zero_point = 0;
        } else {
            out.params.scale = static_cast<float>(std::fabs(lo));
            out.params.zero_point = lo > 0.0 ? 0 : 1;
            std::fill(codes.begin(), codes.end(), lo > 0.0 ? 1u : 0u);
        }
        out.packed = pack_bits(codes, bits);
        return out;
    }

    const double range = hi - lo;
    const double inv_scale = static_cast<double>(levels) / range;
    out.params.scale = static_cast<float>(range / levels);
    if (!(out.params.scale > 0.0f)) throw Error(Errc::numeric, "value range too small for FP32 scale");
    out.params.zero_point = static_cast<std::int32_t>(clamp_code(std::round(-lo * inv_scale), levels));
    for (std::size_t i = 0; i < vals.size(); ++i) {
        codes[i] = clamp_code(std::round(vals[i] * inv_scale) + out.params.zero_point, levels);
    }
    out.packed = pack_bits(codes, bits);
    return out;
}

Bytes quantize_with_params(const Tensor& x, const QuantParams& params) {
    require_params(params);
    const auto levels = quant_levels(params.bits);
    const double inv_scale = 1.0 / static_cast<double>(params.scale);
    std::vector<std::uint32_t> codes(x.numel());
    const auto vals = x.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!std::isfinite(vals[i])) throw Error(Errc::numeric, "cannot quantize non-finite values");
        codes[i] = clamp_code(std::round(vals[i] * inv_scale) + params.zero_point, levels);
    }
    return pack_bits(codes, params.bits);
}

Tensor dequantize_affine(std::span<const std::uint8_t> packed, const QuantParams& params, const Shape& shape) {
    require_params(params);
    const auto count = shape_numel(shape);
    const auto codes = unpack_bits(packed, count, params.bits);
    Tensor out(shape);
    auto ov = out.values();
    for (std::size_t i = 0; i < count; ++i) {
        ov[i] = params.scale * static_cast<float>(static_cast<std::int32_t>(codes[i]) - params.zero_point);
    }
    return out;
}

std::uint16_t float_to_half(float x) noexcept {
    const std::uint32_t f = std::bit_cast<std::uint32_t>(x);
    const auto sign = static_cast<std::uint16_t>((f >> 16) & 0x8000u);
    const std::uint32_t mag = f & 0x7fffffffu;

    if (mag > 0x7f800000u) return static_cast<std::uint16_t>(sign | 0x7e00u);  // NaN
    if (mag >= 0x477ff000u) return static_cast<std::uint16_t>(sign | 0x7bffu);  // >= 65520 would round to inf

    const std::uint32_t exp = mag >> 23;
    if (exp < 113) {
        // result is subnormal (or zero) in binary16
        if (exp < 102) return sign;
        const std::uint32_t mant = (mag & 0x7fffffu) | 0x800000u;
        const std::uint32_t shift = 126 - exp;
        std::uint32_t h = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (h & 1u))) ++h;
        return static_cast<std::uint16_t>(sign | h);
    }
    std::uint32_t h = ((exp - 112) << 10) | ((mag >> 13) & 0x3ffu);
    const std::uint32_t rem = mag & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
    return static_cast<std::uint16_t>(sign | h);
}

float half_to_float(std::uint16_t h) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t f;
    if (exp == 0) {
        if (mant == 0) {
            f = sign;
        } else {
            // normalize the subnormal
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while ((mant & 0x400u) == 0);
            f = sign | (static_cast<std::uint32_t>(112 - e) << 23) | ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 0x1f) {
        f = sign | 0x7f800000u | (mant << 13);
    } else {
        f = sign | ((exp + 112) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(f);
}

std::vector<std::uint16_t> to_fp16(const Tensor& x) {
    std::vector<std::uint16_t> out;
    out.reserve(x.numel());
    for (float v : x.values()) {
        if (std::isnan(v)) throw Error(Errc::numeric, "cannot convert NaN to FP16");
        out.push_back(float_to_half(v));
    }
    return out;
}

Tensor from_fp16(std::span<const std::uint16_t> halves, const Shape& shape) {
    if (halves.size() != shape_numel(shape)) throw Error(Errc::dimension, "FP16 element count does not match shape");
    Tensor out(shape);
    auto ov = out.values();
    for (std::size_t i = 0; i < halves.size(); ++i) ov[i] = half_to_float(halves[i]);
    return out;
}

Tensor round_trip_fp16(const Tensor& x) { return from_fp16(to_fp16(x), x.shape()); }

}  // namespace lsplit
