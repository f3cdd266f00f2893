// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/wire.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "lsplit/error.hpp"

namespace lsplit::wire {

const char* msg_type_name(MsgType t) noexcept {
    switch (t) {
        case MsgType::hello: return "HELLO";
        case MsgType::text: return "TEXT";
        case MsgType::head_out: return "HEAD_OUT";
        case MsgType::body_out: return "BODY_OUT";
        case MsgType::text_emb: return "TEXT_EMB";
        case MsgType::init_latent: return "INIT_LATENT";
        case MsgType::noise: return "NOISE";
        case MsgType::token_done: return "TOKEN_DONE";
        case MsgType::end: return "END";
        case MsgType::error: return "ERROR";
    }
    return "UNKNOWN";
}

bool is_tensor_type(MsgType t) noexcept {
    switch (t) {
        case MsgType::head_out:
        case MsgType::body_out:
        case MsgType::text_emb:
        case MsgType::init_latent:
        case MsgType::noise: return true;
        default: return false;
    }
}

const char* decode_error_name(DecodeError e) noexcept {
    switch (e) {
        case DecodeError::truncated: return "truncated";
        case DecodeError::bad_magic: return "bad_magic";
        case DecodeError::bad_version: return "bad_version";
        case DecodeError::unknown_type: return "unknown_type";
        case DecodeError::bad_flags: return "bad_flags";
        case DecodeError::bad_dtype: return "bad_dtype";
        case DecodeError::bad_dims: return "bad_dims";
        case DecodeError::bad_quant_params: return "bad_quant_params";
        case DecodeError::length_mismatch: return "length_mismatch";
        case DecodeError::trailing_bytes: return "trailing_bytes";
    }
    return "unknown";
}

namespace {

constexpr std::size_t kMaxElements = std::size_t{1} << 31;

void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) noexcept {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint64_t get_u64(const std::uint8_t* p) noexcept {
    return static_cast<std::uint64_t>(get_u32(p)) | static_cast<std::uint64_t>(get_u32(p + 4)) << 32;
}

bool valid_quant(const QuantParams& q) noexcept {
    return is_supported_bit_width(q.bits) && std::isfinite(q.scale) && q.scale > 0.0f && q.zero_point >= 0 &&
           q.zero_point <= quant_levels(q.bits);
}

std::optional<std::size_t> element_count(std::span<const std::uint32_t> dims) noexcept {
    std::size_t n = 1;
    for (auto d : dims) {
        if (d == 0) return std::nullopt;
        if (n > kMaxElements / d) return std::nullopt;
        n *= d;
    }
    return n;
}

// Offset of payload_len for a header whose first 21 bytes are present.
std::size_t payload_len_offset(std::uint8_t ndim, bool quantized) noexcept {
    return 21 + 4 * static_cast<std::size_t>(ndim) + (quantized ? kQuantBlockSize : 0);
}

}  // namespace

std::optional<std::size_t> expected_payload_size(const Frame& f) {
    if (!is_tensor_type(f.type)) return std::nullopt;
    const auto count = element_count(f.dims);
    if (!count) throw Error(Errc::frame, "tensor dims must be non-zero");
    switch (f.dtype) {
        case DType::fp32: return *count * 4;
        case DType::fp16: return *count * 2;
        case DType::int_packed:
            if (!f.quant) throw Error(Errc::frame, "INT-packed frame without quantization params");
            return packed_size(*count, f.quant->bits);
    }
    throw Error(Errc::frame, "unknown dtype");
}

std::size_t encoded_size(const Frame& f) noexcept {
    return kFixedHeaderSize + 4 * f.dims.size() + (f.quant ? kQuantBlockSize : 0) + f.payload.size();
}

Bytes encode_frame(const Frame& f) {
    if (f.dims.size() > kMaxDims) throw Error(Errc::frame, "too many dims");
    if (is_tensor_type(f.type)) {
        if (f.dims.empty()) throw Error(Errc::frame, "tensor frame needs at least one dim");
        if ((f.dtype == DType::int_packed) != f.quant.has_value()) {
            throw Error(Errc::frame, "quantization params present iff dtype is INT-packed");
        }
        if (f.quant && !valid_quant(*f.quant)) throw Error(Errc::frame, "invalid quantization params");
        if (f.payload.size() != *expected_payload_size(f)) {
            throw Error(Errc::frame, "payload is " + std::to_string(f.payload.size()) + " bytes, header implies " +
                                         std::to_string(*expected_payload_size(f)));
        }
    } else if (!f.dims.empty() || f.quant || f.dtype != DType::fp32) {
        throw Error(Errc::frame, std::string(msg_type_name(f.type)) + " frames carry opaque bytes only");
    }
    if (f.payload.size() > std::numeric_limits<std::uint32_t>::max()) throw Error(Errc::frame, "payload too large");

    Bytes out;
    out.reserve(encoded_size(f));
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u8(out, kVersion);
    put_u8(out, static_cast<std::uint8_t>(f.type));
    put_u8(out, f.quant ? kFlagQuantized : 0);
    put_u8(out, static_cast<std::uint8_t>(f.dtype));
    put_u64(out, f.session_id);
    put_u32(out, f.step_index);
    put_u8(out, static_cast<std::uint8_t>(f.dims.size()));
    for (auto d : f.dims) put_u32(out, d);
    if (f.quant) {
        put_u8(out, f.quant->bits);
        put_u32(out, std::bit_cast<std::uint32_t>(f.quant->scale));
        put_u32(out, static_cast<std::uint32_t>(f.quant->zero_point));
    }
    put_u32(out, static_cast<std::uint32_t>(f.payload.size()));
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    return out;
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) noexcept {
    const auto n = bytes.size();
    const std::uint8_t* p = bytes.data();
    for (std::size_t i = 0; i < 4; ++i) {
        if (i >= n) return DecodeError::truncated;
        if (p[i] != kMagic[i]) return DecodeError::bad_magic;
    }
    if (n < 5) return DecodeError::truncated;
    if (p[4] != kVersion) return DecodeError::bad_version;
    if (n < 21) return DecodeError::truncated;

    if (p[5] >= kMsgTypeCount) return DecodeError::unknown_type;
    const auto type = static_cast<MsgType>(p[5]);
    const std::uint8_t flags = p[6];
    if (flags & ~kFlagQuantized) return DecodeError::bad_flags;
    const bool quantized = flags & kFlagQuantized;
    if (p[7] > static_cast<std::uint8_t>(DType::int_packed)) return DecodeError::bad_dtype;
    const auto dtype = static_cast<DType>(p[7]);
    const std::uint8_t ndim = p[20];

    if (is_tensor_type(type)) {
        if (ndim == 0 || ndim > kMaxDims) return DecodeError::bad_dims;
        if (quantized != (dtype == DType::int_packed)) return quantized ? DecodeError::bad_dtype : DecodeError::bad_flags;
    } else {
        if (quantized) return DecodeError::bad_flags;
        if (dtype != DType::fp32) return DecodeError::bad_dtype;
        if (ndim != 0) return DecodeError::bad_dims;
    }

    const std::size_t len_off = payload_len_offset(ndim, quantized);
    if (n < len_off + 4) return DecodeError::truncated;

    Frame f;
    f.type = type;
    f.dtype = dtype;
    f.session_id = get_u64(p + 8);
    f.step_index = get_u32(p + 16);
    try {
        f.dims.resize(ndim);
    } catch (...) {
        return DecodeError::bad_dims;
    }
    for (std::size_t i = 0; i < ndim; ++i) f.dims[i] = get_u32(p + 21 + 4 * i);

    std::size_t expected = 0;
    bool fixed_size = false;
    if (is_tensor_type(type)) {
        const auto count = element_count(f.dims);
        if (!count) return DecodeError::bad_dims;
        if (quantized) {
            const std::uint8_t* q = p + 21 + 4 * ndim;
            QuantParams qp;
            qp.bits = q[0];
            qp.scale = std::bit_cast<float>(get_u32(q + 1));
            qp.zero_point = static_cast<std::int32_t>(get_u32(q + 5));
            if (!valid_quant(qp)) return DecodeError::bad_quant_params;
            f.quant = qp;
            expected = packed_size(*count, qp.bits);
        } else {
            expected = *count * (dtype == DType::fp16 ? 2 : 4);
        }
        fixed_size = true;
    }

    const std::size_t payload_len = get_u32(p + len_off);
    if (fixed_size && payload_len != expected) return DecodeError::length_mismatch;
    const std::size_t body = len_off + 4;
    if (n - body < payload_len) return DecodeError::truncated;
    if (n - body > payload_len) return DecodeError::trailing_bytes;
    try {
        f.payload.assign(p + body, p + body + payload_len);
    } catch (...) {
        return DecodeError::length_mismatch;
    }
    return f;
}

SizeHint frame_size_hint(std::span<const std::uint8_t> prefix) noexcept {
    if (prefix.size() < 21) return {21, false};
    const bool quantized = prefix[6] & kFlagQuantized;
    const std::size_t len_off = payload_len_offset(prefix[20], quantized);
    if (prefix.size() < len_off + 4) return {len_off + 4, false};
    return {len_off + 4 + get_u32(prefix.data() + len_off), true};
}

int wire_bits(WireFormat f) noexcept {
    switch (f) {
        case WireFormat::fp32: return 32;
        case WireFormat::fp16: return 16;
        case WireFormat::int8: return 8;
        case WireFormat::int6: return 6;
        case WireFormat::int4: return 4;
        case WireFormat::int2: return 2;
    }
    return 32;
}

const char* wire_format_name(WireFormat f) noexcept {
    switch (f) {
        case WireFormat::fp32: return "fp32";
        case WireFormat::fp16: return "fp16";
        case WireFormat::int8: return "int8";
        case WireFormat::int6: return "int6";
        case WireFormat::int4: return "int4";
        case WireFormat::int2: return "int2";
    }
    return "fp32";
}

WireFormat wire_format_from_bits(int bits) {
    switch (bits) {
        case 32: return WireFormat::fp32;
        case 16: return WireFormat::fp16;
        case 8: return WireFormat::int8;
        case 6: return WireFormat::int6;
        case 4: return WireFormat::int4;
        case 2: return WireFormat::int2;
        default: throw Error(Errc::parameter, "no wire format with " + std::to_string(bits) + " bits");
    }
}

WireFormat parse_wire_format(std::string_view name) {
    for (auto f : {WireFormat::fp32, WireFormat::fp16, WireFormat::int8, WireFormat::int6, WireFormat::int4,
                   WireFormat::int2}) {
        if (name == wire_format_name(f) || name == std::to_string(wire_bits(f))) return f;
    }
    throw Error(Errc::parameter, "unknown wire format '" + std::string(name) + "'");
}

Frame make_tensor_frame(MsgType type, std::uint64_t session, std::uint32_t step, const Tensor& t, WireFormat format) {
    if (!is_tensor_type(type)) throw Error(Errc::frame, std::string(msg_type_name(type)) + " is not a tensor frame");
    Frame f;
    f.type = type;
    f.session_id = session;
    f.step_index = step;
    for (auto d : t.shape()) {
        if (d == 0 || d > std::numeric_limits<std::uint32_t>::max()) throw Error(Errc::frame, "dim out of range");
        f.dims.push_back(static_cast<std::uint32_t>(d));
    }
    switch (format) {
        case WireFormat::fp32: {
            f.dtype = DType::fp32;
            f.payload.reserve(t.numel() * 4);
            for (float v : t.values()) put_u32(f.payload, std::bit_cast<std::uint32_t>(v));
            break;
        }
        case WireFormat::fp16: {
            f.dtype = DType::fp16;
            f.payload.reserve(t.numel() * 2);
            for (auto h : to_fp16(t)) {
                f.payload.push_back(static_cast<std::uint8_t>(h));
                f.payload.push_back(static_cast<std::uint8_t>(h >> 8));
            }
            break;
        }
        default: {
            f.dtype = DType::int_packed;
            auto q = quantize_affine(t, wire_bits(format));
            f.quant = q.params;
            f.payload = std::move(q.packed);
            break;
        }
    }
    return f;
}

Tensor frame_tensor(const Frame& f) {
    if (!is_tensor_type(f.type)) throw Error(Errc::frame, std::string(msg_type_name(f.type)) + " carries no tensor");
    Shape shape(f.dims.begin(), f.dims.end());
    const auto expected = expected_payload_size(f);
    if (!expected || *expected != f.payload.size()) throw Error(Errc::frame, "payload size does not match header");
    const auto count = shape_numel(shape);
    switch (f.dtype) {
        case DType::fp32: {
            std::vector<float> vals(count);
            for (std::size_t i = 0; i < count; ++i) vals[i] = std::bit_cast<float>(get_u32(f.payload.data() + 4 * i));
            return Tensor(std::move(shape), std::move(vals));
        }
        case DType::fp16: {
            std::vector<std::uint16_t> halves(count);
            for (std::size_t i = 0; i < count; ++i) {
                halves[i] = static_cast<std::uint16_t>(f.payload[2 * i] | (f.payload[2 * i + 1] << 8));
            }
            return from_fp16(halves, shape);
        }
        case DType::int_packed: return dequantize_affine(f.payload, *f.quant, shape);
    }
    throw Error(Errc::frame, "unknown dtype");
}

Frame make_bytes_frame(MsgType type, std::uint64_t session, std::uint32_t step, std::string_view bytes) {
    if (is_tensor_type(type)) throw Error(Errc::frame, std::string(msg_type_name(type)) + " is a tensor frame");
    Frame f;
    f.type = type;
    f.session_id = session;
    f.step_index = step;
    f.payload.assign(bytes.begin(), bytes.end());
    return f;
}

std::string payload_text(const Frame& f) { return std::string(f.payload.begin(), f.payload.end()); }

std::string encode_kv(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

KeyValues decode_kv(std::string_view text) {
    KeyValues kv;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw Error(Errc::frame, "malformed session parameter line");
        kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
    }
    return kv;
}

}  // namespace lsplit::wire
