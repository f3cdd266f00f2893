// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lsplit/quant.hpp"
#include "lsplit/tensor.hpp"

namespace lsplit::wire {

//  offset  size     field
//  0       4        magic "LSPL"
//  4       1        version (1)
//  5       1        msg_type
//  6       1        flags (bit0: quantized payload; other bits must be zero)
//  7       1        dtype (0 FP32, 1 FP16, 2 INT-packed)
//  8       8        session_id
//  16      4        step_index
//  20      1        ndim
//  21      4*ndim   dims
//  ..      9        bits u8, scale f32, zero_point i32   (quantized frames only)
//  ..      4        payload_len
//  ..      n        payload
//
// Integers little-endian, floats IEEE 754 little-endian.
inline constexpr std::uint8_t kMagic[4] = {'L', 'S', 'P', 'L'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kFixedHeaderSize = 25;
inline constexpr std::size_t kQuantBlockSize = 9;
inline constexpr std::size_t kMaxDims = 8;
inline constexpr std::uint8_t kFlagQuantized = 0x01;

enum class MsgType : std::uint8_t {
    hello = 0,
    text = 1,
    head_out = 2,
    body_out = 3,
    text_emb = 4,
    init_latent = 5,
    noise = 6,
    token_done = 7,
    end = 8,
    error = 9,
};
inline constexpr std::size_t kMsgTypeCount = 10;

const char* msg_type_name(MsgType t) noexcept;

/// Tensor-carrying types have dims and a typed payload; the rest carry opaque
/// bytes with ndim = 0, dtype = 0 and no quantization block.
bool is_tensor_type(MsgType t) noexcept;

struct Frame {
    MsgType type = MsgType::hello;
    DType dtype = DType::fp32;
    std::uint64_t session_id = 0;
    std::uint32_t step_index = 0;
    std::vector<std::uint32_t> dims;
    std::optional<QuantParams> quant;
    Bytes payload;

    bool operator==(const Frame&) const = default;
};

enum class DecodeError {
    truncated,
    bad_magic,
    bad_version,
    unknown_type,
    bad_flags,
    bad_dtype,
    bad_dims,
    bad_quant_params,
    length_mismatch,
    trailing_bytes,
};

const char* decode_error_name(DecodeError e) noexcept;

/// Either a frame or the first structural problem found.
class DecodeResult {
public:
    DecodeResult(Frame f) : value_(std::move(f)) {}
    DecodeResult(DecodeError e) : value_(e) {}

    bool ok() const noexcept { return std::holds_alternative<Frame>(value_); }
    explicit operator bool() const noexcept { return ok(); }
    const Frame& frame() const { return std::get<Frame>(value_); }
    Frame& frame() { return std::get<Frame>(value_); }
    DecodeError error() const { return std::get<DecodeError>(value_); }

private:
    std::variant<Frame, DecodeError> value_;
};

/// Size the payload must have for the frame's type, dtype, dims and bits.
/// Returns nullopt for opaque-byte frames, whose payload length is free.
std::optional<std::size_t> expected_payload_size(const Frame& f);

std::size_t encoded_size(const Frame& f) noexcept;

/// Throws Error(Errc::frame) when payload and header disagree.
Bytes encode_frame(const Frame& f);

/// Parses exactly one frame occupying all of `bytes`. Never throws.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes) noexcept;

/// Incremental framing for byte streams: given a prefix, how many bytes the
/// frame needs. `complete` is true once the total size is known.
struct SizeHint {
    std::size_t needed = 0;
    bool complete = false;
};
SizeHint frame_size_hint(std::span<const std::uint8_t> prefix) noexcept;

// --- tensor payload helpers ------------------------------------------------

/// Transmission encodings for tensor frames.
enum class WireFormat { fp32, fp16, int8, int6, int4, int2 };

int wire_bits(WireFormat f) noexcept;  // 32, 16, 8, 6, 4, 2
const char* wire_format_name(WireFormat f) noexcept;
WireFormat parse_wire_format(std::string_view name);  // "fp32", "fp16", "int8", ... or "32", "16", "8", ...
WireFormat wire_format_from_bits(int bits);

Frame make_tensor_frame(MsgType type, std::uint64_t session, std::uint32_t step, const Tensor& t,
                        WireFormat format = WireFormat::fp32);

/// Decodes the payload back to FP32 (dequantizing or widening as needed).
Tensor frame_tensor(const Frame& f);

Frame make_bytes_frame(MsgType type, std::uint64_t session, std::uint32_t step, std::string_view bytes = {});

std::string payload_text(const Frame& f);

/// HELLO payloads: "key=value" lines describing the session.
using KeyValues = std::map<std::string, std::string>;
std::string encode_kv(const KeyValues& kv);
KeyValues decode_kv(std::string_view text);

}  // namespace lsplit::wire
