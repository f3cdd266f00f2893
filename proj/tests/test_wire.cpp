// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>

#include "lsplit/error.hpp"
#include "lsplit/wire.hpp"

using namespace lsplit;
using namespace lsplit::wire;

namespace {

void le32(Bytes& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Builds a frame byte by byte from the layout table.
Bytes hand_encode(std::uint8_t type, std::uint8_t dtype, std::uint64_t session, std::uint32_t step,
                  const std::vector<std::uint32_t>& dims, const QuantParams* q, const Bytes& payload) {
    Bytes b{'L', 'S', 'P', 'L', 1, type, static_cast<std::uint8_t>(q ? 1 : 0), dtype};
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(session >> (8 * i)));
    le32(b, step);
    b.push_back(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) le32(b, d);
    if (q) {
        b.push_back(q->bits);
        std::uint32_t s;
        std::memcpy(&s, &q->scale, 4);
        le32(b, s);
        le32(b, static_cast<std::uint32_t>(q->zero_point));
    }
    le32(b, static_cast<std::uint32_t>(payload.size()));
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

Frame random_frame(Prng& rng) {
    auto pick = [&](std::uint32_t n) { return static_cast<std::uint32_t>(rng.uniform01() * n); };
    const auto type = static_cast<MsgType>(pick(kMsgTypeCount));
    const auto session = static_cast<std::uint64_t>(rng.uniform01() * 1.8e19);
    const auto step = pick(100000);
    if (!is_tensor_type(type)) {
        std::string s(pick(64), '\0');
        for (auto& c : s) c = static_cast<char>(pick(256));
        return make_bytes_frame(type, session, step, s);
    }
    Shape shape;
    const auto ndim = 1 + pick(3);
    for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(1 + pick(5));
    Tensor t(shape);
    for (auto& v : t.values()) v = rng.uniform(-4.0f, 4.0f);
    const WireFormat formats[] = {WireFormat::fp32, WireFormat::fp16, WireFormat::int8,
                                  WireFormat::int6, WireFormat::int4, WireFormat::int2};
    return make_tensor_frame(type, session, step, t, formats[pick(6)]);
}

}  // namespace

TEST_CASE("END frame is exactly the fixed header") {
    const Bytes b = encode_frame(make_bytes_frame(MsgType::end, 7, 3));
    CHECK(b.size() == 25);
    CHECK(b == hand_encode(8, 0, 7, 3, {}, nullptr, {}));
}

TEST_CASE("FP32 HEAD_OUT of shape 1 x 8 is 65 bytes") {
    Tensor t({1, 8});
    for (std::size_t i = 0; i < 8; ++i) t.values()[i] = 0.5f * float(i);
    const Frame f = make_tensor_frame(MsgType::head_out, 0x0102030405060708ull, 9, t);
    const Bytes b = encode_frame(f);
    CHECK(b.size() == 25 + 8 + 32);
    Bytes payload;
    for (float v : t.values()) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        le32(payload, u);
    }
    CHECK(b == hand_encode(2, 0, 0x0102030405060708ull, 9, {1, 8}, nullptr, payload));
}

TEST_CASE("quantized frame layout") {
    Tensor t({2, 2}, {-1.0f, 0.0f, 0.5f, 1.0f});
    const Frame f = make_tensor_frame(MsgType::noise, 1, 2, t, WireFormat::int4);
    REQUIRE(f.quant);
    const Bytes b = encode_frame(f);
    CHECK(b.size() == 25 + 8 + 9 + 2);
    CHECK(b == hand_encode(6, 2, 1, 2, {2, 2}, &*f.quant, f.payload));
}

TEST_CASE("random frames round-trip") {
    Prng rng(PrngSeed{2026});
    for (int i = 0; i < 10000; ++i) {
        const Frame f = random_frame(rng);
        const Bytes b = encode_frame(f);
        CHECK(b.size() == encoded_size(f));
        const auto d = decode_frame(b);
        REQUIRE(d.ok());
        CHECK(d.frame() == f);
        const auto hint = frame_size_hint(std::span(b).first(std::min<std::size_t>(b.size(), 64)));
        if (hint.complete) CHECK(hint.needed == b.size());
    }
}

TEST_CASE("arbitrary bytes never crash the decoder") {
    Prng rng(PrngSeed{7});
    std::size_t accepted = 0;
    for (int i = 0; i < 100000; ++i) {
        Bytes b(static_cast<std::size_t>(rng.uniform01() * 80));
        for (auto& c : b) c = static_cast<std::uint8_t>(rng.uniform01() * 256);
        // bias half the inputs towards a valid prefix so the later checks are reached
        if (i % 2 && b.size() >= 5) std::memcpy(b.data(), "LSPL\x01", 5);
        if (i % 4 == 1 && b.size() >= 8) {
            b[5] %= kMsgTypeCount;
            b[6] &= 1;
            b[7] %= 3;
        }
        const auto d = decode_frame(b);
        if (d.ok()) {
            ++accepted;
            CHECK(encode_frame(d.frame()) == b);
        }
    }
    CHECK(accepted < 100000);
}

TEST_CASE("every single-byte corruption is rejected or decodes canonically") {
    Prng rng(PrngSeed{11});
    std::vector<Frame> frames;
    Tensor t({2, 3});
    for (auto& v : t.values()) v = rng.uniform(-1.0f, 1.0f);
    frames.push_back(make_tensor_frame(MsgType::body_out, 5, 1, t));
    frames.push_back(make_tensor_frame(MsgType::noise, 5, 1, t, WireFormat::int6));
    frames.push_back(make_tensor_frame(MsgType::head_out, 5, 1, t, WireFormat::fp16));
    frames.push_back(make_bytes_frame(MsgType::hello, 5, 0, "kind=llm\n"));
    for (const auto& f : frames) {
        const Bytes good = encode_frame(f);
        for (std::size_t pos = 0; pos < good.size(); ++pos) {
            for (int v = 0; v < 256; ++v) {
                if (v == good[pos]) continue;
                Bytes bad = good;
                bad[pos] = static_cast<std::uint8_t>(v);
                const auto d = decode_frame(bad);
                if (d.ok()) CHECK(encode_frame(d.frame()) == bad);
            }
            // truncation at every length
            CHECK_FALSE(decode_frame(std::span(good).first(pos)).ok());
        }
        Bytes longer = good;
        longer.push_back(0);
        CHECK(decode_frame(longer).error() == DecodeError::trailing_bytes);
    }
}

TEST_CASE("specific decode errors") {
    CHECK(decode_frame({}).error() == DecodeError::truncated);
    Bytes b = encode_frame(make_bytes_frame(MsgType::end, 1, 0));
    auto mutate = [&](std::size_t pos, std::uint8_t v) {
        Bytes c = b;
        c[pos] = v;
        return decode_frame(c).error();
    };
    CHECK(mutate(0, 'X') == DecodeError::bad_magic);
    CHECK(mutate(4, 2) == DecodeError::bad_version);
    CHECK(mutate(5, 10) == DecodeError::unknown_type);
    CHECK(mutate(6, 2) == DecodeError::bad_flags);
    CHECK(mutate(7, 1) == DecodeError::bad_dtype);
    CHECK(mutate(21, 1) == DecodeError::truncated);
}

TEST_CASE("bad quantization blocks are rejected") {
    Tensor t({4}, {0.0f, 1.0f, 2.0f, 3.0f});
    const Bytes good = encode_frame(make_tensor_frame(MsgType::noise, 1, 0, t, WireFormat::int8));
    const std::size_t qoff = 21 + 4;
    Bytes bad_bits = good;
    bad_bits[qoff] = 3;
    CHECK(decode_frame(bad_bits).error() == DecodeError::bad_quant_params);
    Bytes neg_scale = good;
    neg_scale[qoff + 4] |= 0x80;
    CHECK(decode_frame(neg_scale).error() == DecodeError::bad_quant_params);
}

TEST_CASE("NOISE at 8 bits carries the quantized tensor") {
    Prng rng(PrngSeed{3});
    Tensor t({4, 16, 16});
    for (auto& v : t.values()) v = static_cast<float>(rng.normal());
    const Frame f = make_tensor_frame(MsgType::noise, 9, 4, t, WireFormat::int8);
    CHECK(f.payload.size() == 1024);
    const auto d = decode_frame(encode_frame(f));
    REQUIRE(d.ok());
    const Tensor back = frame_tensor(d.frame());
    const auto q = quantize_affine(t, 8);
    CHECK(back.bit_equal(dequantize_affine(q.packed, q.params, t.shape())));
}

TEST_CASE("encoder rejects inconsistent frames") {
    Frame f = make_tensor_frame(MsgType::head_out, 1, 0, Tensor({1, 2}, {1.0f, 2.0f}));
    f.payload.pop_back();
    CHECK_THROWS_AS(encode_frame(f), Error);
    Frame g = make_bytes_frame(MsgType::text, 1, 0, "hi");
    g.dims = {1};
    CHECK_THROWS_AS(encode_frame(g), Error);
    CHECK_THROWS_AS(make_tensor_frame(MsgType::text, 1, 0, Tensor({1}, {1.0f})), Error);
}

TEST_CASE("wire formats and key-value payloads") {
    CHECK(parse_wire_format("int4") == WireFormat::int4);
    CHECK(parse_wire_format("16") == WireFormat::fp16);
    CHECK(wire_format_from_bits(32) == WireFormat::fp32);
    CHECK_THROWS_AS(parse_wire_format("int3"), Error);
    const KeyValues kv{{"kind", "llm"}, {"x", "1"}, {"y", "31"}};
    CHECK(decode_kv(encode_kv(kv)) == kv);
}
