// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/ldm.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "lsplit/error.hpp"

namespace lsplit::ldm {

using wire::Frame;
using wire::MsgType;

void LdmConfig::validate() const {
    if (t_steps < 1) throw Error(Errc::parameter, "T_steps must be at least 1");
    if (channels == 0 || height == 0 || width == 0) throw Error(Errc::parameter, "latent dims must be positive");
    if (embed_dim == 0 || hidden == 0) throw Error(Errc::parameter, "embed_dim and hidden must be positive");
}

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t salt) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ salt;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void require_latent(const Tensor& latent, const LdmConfig& cfg) {
    if (latent.shape() != cfg.latent_shape()) throw Error(Errc::parameter, "latent shape does not match pipeline config");
}

}  // namespace

Tensor encode_text(std::string_view prompt, std::size_t embed_dim) {
    if (embed_dim == 0) throw Error(Errc::parameter, "embed_dim must be positive");
    std::vector<double> acc(embed_dim, 0.0);
    for (std::size_t n = 1; n <= 3; ++n) {
        for (std::size_t i = 0; i + n <= prompt.size(); ++i) {
            const auto h = fnv1a(prompt.substr(i, n), n);
            acc[h % embed_dim] += (h >> 63) ? -1.0 : 1.0;
        }
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    Tensor out({1, embed_dim});
    if (norm > 0.0) {
        auto ov = out.values();
        for (std::size_t i = 0; i < embed_dim; ++i) ov[i] = static_cast<float>(acc[i] / norm);
    }
    return out;
}

Tensor sample_initial_latent(const LdmConfig& config, PrngSeed seed) {
    Prng rng(seed);
    Tensor out(config.latent_shape());
    for (auto& v : out.values()) v = static_cast<float>(rng.normal());
    return out;
}

NoisePredictor::NoisePredictor(const LdmConfig& config, Prng& rng) : config_(config) {
    const auto c = config.channels, h = config.hidden, e = config.embed_dim;
    w_embed_ = uniform_tensor({e, h}, 1.0f / std::sqrt(static_cast<float>(e)), rng);
    w_in_ = uniform_tensor({2 * c, h}, 1.0f / std::sqrt(static_cast<float>(2 * c)), rng);
    b_in_ = uniform_tensor({h}, 0.1f, rng);
    w_out_ = uniform_tensor({h, c}, 1.0f / std::sqrt(static_cast<float>(h)), rng);
    b_out_ = uniform_tensor({c}, 0.1f, rng);
}

Tensor NoisePredictor::conditioning(const Tensor& text_emb, std::size_t t) const {
    if (text_emb.numel() != config_.embed_dim) throw Error(Errc::parameter, "text embedding has the wrong width");
    Tensor cond = matmul(text_emb.reshaped({1, config_.embed_dim}), w_embed_);
    auto cv = cond.values();
    const auto h = config_.hidden;
    for (std::size_t j = 0; j < h; ++j) {
        const double freq = std::pow(10000.0, -static_cast<double>(j / 2 * 2) / static_cast<double>(h));
        const double angle = static_cast<double>(t) * freq;
        cv[j] += static_cast<float>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
    return cond;
}

Tensor NoisePredictor::predict(const Tensor& latent, const Tensor& text_emb, std::size_t t) const {
    require_latent(latent, config_);
    const auto c = config_.channels, hgt = config_.height, wid = config_.width, hid = config_.hidden;
    const auto pixels = hgt * wid;
    const auto lv = latent.values();

    // rows = pixels, cols = [C values, C neighbourhood means]
    Tensor features({pixels, 2 * c});
    for (std::size_t y = 0; y < hgt; ++y) {
        for (std::size_t x = 0; x < wid; ++x) {
            auto row = features.row(y * wid + x);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const float* plane = lv.data() + ch * pixels;
                row[ch] = plane[y * wid + x];
                float sum = 0.0f;
                int count = 0;
                for (std::size_t yy = (y == 0 ? 0 : y - 1); yy <= std::min(hgt - 1, y + 1); ++yy) {
                    for (std::size_t xx = (x == 0 ? 0 : x - 1); xx <= std::min(wid - 1, x + 1); ++xx) {
                        sum += plane[yy * wid + xx];
                        ++count;
                    }
                }
                row[c + ch] = sum / static_cast<float>(count);
            }
        }
    }

    Tensor hidden = matmul(features, w_in_);
    add_row_bias_inplace(hidden, b_in_);
    add_row_bias_inplace(hidden, conditioning(text_emb, t).reshaped({hid}));
    gelu_inplace(hidden);
    Tensor out = matmul(hidden, w_out_);
    add_row_bias_inplace(out, b_out_);

    Tensor noise(latent.shape());
    auto nv = noise.values();
    for (std::size_t p = 0; p < pixels; ++p) {
        const auto orow = out.row(p);
        for (std::size_t ch = 0; ch < c; ++ch) nv[ch * pixels + p] = lv[ch * pixels + p] + orow[ch];
    }
    return noise;
}

Tensor denoise_step(const Tensor& latent, const Tensor& noise, std::size_t /*t*/, std::size_t t_steps) {
    if (latent.shape() != noise.shape()) throw Error(Errc::dimension, "noise and latent shapes differ");
    if (t_steps == 0) throw Error(Errc::parameter, "T_steps must be at least 1");
    Tensor out(latent.shape());
    const float steps = static_cast<float>(t_steps);
    const auto lv = latent.values();
    const auto nv = noise.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = lv[i] - nv[i] / steps;
    return out;
}

ImageDecoder::ImageDecoder(const LdmConfig& config, Prng& rng)
    : config_(config), weights_(uniform_tensor({3, config.channels}, 1.0f / std::sqrt(static_cast<float>(config.channels)), rng)) {}

Image ImageDecoder::decode(const Tensor& latent) const {
    require_latent(latent, config_);
    const auto c = config_.channels, hgt = config_.height, wid = config_.width;
    const auto pixels = hgt * wid;
    const auto lv = latent.values();
    Image img(2 * wid, 2 * hgt);
    for (std::size_t y = 0; y < hgt; ++y) {
        for (std::size_t x = 0; x < wid; ++x) {
            for (std::size_t o = 0; o < 3; ++o) {
                float v = 0.0f;
                for (std::size_t ch = 0; ch < c; ++ch) v += weights_(o, ch) * lv[ch * pixels + y * wid + x];
                const float level = std::clamp(std::round(kDecodeOffset + kDecodeGain * v), 0.0f, 255.0f);
                const auto px = static_cast<std::uint8_t>(level);
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) img.at(2 * x + dx, 2 * y + dy, o) = px;
                }
            }
        }
    }
    return img;
}

double ImageDecoder::lipschitz_bound() const {
    double worst = 0.0;
    for (std::size_t o = 0; o < 3; ++o) {
        double row = 0.0;
        for (std::size_t ch = 0; ch < config_.channels; ++ch) row += std::fabs(weights_(o, ch));
        worst = std::max(worst, row);
    }
    return kDecodeGain * worst;
}

Pipeline build_toy_ldm(const LdmConfig& config) {
    config.validate();
    Prng rng(config.seed);
    Pipeline p;
    p.config = config;
    p.unet = NoisePredictor(config, rng);
    p.decoder = ImageDecoder(config, rng);
    return p;
}

Image generate_monolithic_ldm(const Pipeline& pipeline, std::string_view prompt, PrngSeed seed, std::size_t t_steps) {
    if (t_steps < 1) throw Error(Errc::parameter, "T_steps must be at least 1");
    const Tensor emb = encode_text(prompt, pipeline.config.embed_dim);
    Tensor latent = sample_initial_latent(pipeline.config, seed);
    for (std::size_t k = 0; k < t_steps; ++k) {
        const auto t = timestep_at(k, t_steps);
        latent = denoise_step(latent, pipeline.unet.predict(latent, emb, t), t, t_steps);
    }
    return pipeline.decoder.decode(latent);
}

const char* cloud_sync_name(CloudSync s) noexcept { return s == CloudSync::own_fp32 ? "own-fp32" : "dequantized"; }

CloudSync parse_cloud_sync(std::string_view name) {
    if (name == "own-fp32") return CloudSync::own_fp32;
    if (name == "dequantized") return CloudSync::dequantized;
    throw Error(Errc::parameter, "unknown cloud_sync '" + std::string(name) + "'");
}

std::string ldm_hello_payload(const LdmSplitOptions& options, std::size_t t_steps) {
    return wire::encode_kv({{"kind", "ldm"},
                            {"t_steps", std::to_string(t_steps)},
                            {"wire", wire::wire_format_name(options.wire)},
                            {"sync", cloud_sync_name(options.sync)}});
}

LdmCloudSession::LdmCloudSession(const Pipeline& pipeline, std::size_t t_steps, wire::WireFormat wire, CloudSync sync)
    : pipeline_(pipeline), t_steps_(t_steps), wire_(wire), sync_(sync) {
    if (t_steps < 1) throw Error(Errc::parameter, "T_steps must be at least 1");
}

void LdmCloudSession::on_text_embedding(const Frame& frame) {
    if (frame.type != MsgType::text_emb) throw Error(Errc::state, "expected TEXT_EMB");
    Tensor emb = wire::frame_tensor(frame);
    if (emb.numel() != pipeline_.config.embed_dim) throw Error(Errc::parameter, "text embedding has the wrong width");
    text_emb_ = std::move(emb);
}

std::vector<Frame> LdmCloudSession::on_initial_latent(const Frame& frame) {
    if (frame.type != MsgType::init_latent) throw Error(Errc::state, "expected INIT_LATENT");
    if (!text_emb_) throw Error(Errc::state, "INIT_LATENT before TEXT_EMB");
    latent_ = wire::frame_tensor(frame);
    require_latent(latent_, pipeline_.config);

    std::vector<Frame> out;
    out.reserve(t_steps_);
    for (std::size_t k = 0; k < t_steps_; ++k) {
        const auto t = timestep_at(k, t_steps_);
        const Tensor noise = pipeline_.unet.predict(latent_, *text_emb_, t);
        Frame nf = wire::make_tensor_frame(MsgType::noise, frame.session_id, static_cast<std::uint32_t>(k), noise, wire_);
        if (sync_ == CloudSync::own_fp32) {
            latent_ = denoise_step(latent_, noise, t, t_steps_);
        } else {
            latent_ = denoise_step(latent_, wire::frame_tensor(nf), t, t_steps_);
        }
        out.push_back(std::move(nf));
    }
    return out;
}

Image run_ldm_split_client(const Pipeline& pipeline, std::string_view prompt, PrngSeed seed, std::size_t t_steps,
                           const LdmSplitOptions& options, MeteredLink& link, Tensor* final_latent) {
    if (t_steps < 1) throw Error(Errc::parameter, "T_steps must be at least 1");
    const auto session = options.session_id;
    link.send(wire::make_bytes_frame(MsgType::hello, session, 0, ldm_hello_payload(options, t_steps)));
    expect_frame(link, MsgType::hello, 0);

    Tensor emb, latent;
    double spent = 0.0;
    {
        ScopedTimer timer(spent);
        emb = encode_text(prompt, pipeline.config.embed_dim);
        latent = sample_initial_latent(pipeline.config, seed);
    }
    link.add_local_compute(spent);
    link.send(wire::make_tensor_frame(MsgType::text_emb, session, 0, emb));
    link.send(wire::make_tensor_frame(MsgType::init_latent, session, 0, latent));

    for (std::size_t k = 0; k < t_steps; ++k) {
        const Tensor noise = wire::frame_tensor(expect_frame(link, MsgType::noise, static_cast<std::uint32_t>(k)));
        spent = 0.0;
        {
            ScopedTimer timer(spent);
            const auto t = timestep_at(k, t_steps);
            latent = denoise_step(latent, noise, t, t_steps);
        }
        link.add_local_compute(spent);
    }

    Image img;
    spent = 0.0;
    {
        ScopedTimer timer(spent);
        img = pipeline.decoder.decode(latent);
    }
    link.add_local_compute(spent);
    link.set_items(1);

    const auto end_step = static_cast<std::uint32_t>(t_steps);
    link.send(wire::make_bytes_frame(MsgType::end, session, end_step));
    expect_frame(link, MsgType::end, end_step);
    if (final_latent) *final_latent = std::move(latent);
    return img;
}

FrameHandler ldm_loopback_handler(const Pipeline& pipeline) {
    auto session = std::make_shared<std::optional<LdmCloudSession>>();
    return [&pipeline, session](std::span<const std::uint8_t> bytes) -> std::vector<Bytes> {
        auto decoded = wire::decode_frame(bytes);
        if (!decoded) {
            return {wire::encode_frame(wire::make_bytes_frame(MsgType::error, 0, 0, wire::decode_error_name(decoded.error())))};
        }
        const Frame& f = decoded.frame();
        try {
            switch (f.type) {
                case MsgType::hello: {
                    const auto kv = wire::decode_kv(wire::payload_text(f));
                    const auto steps = kv.count("t_steps") ? std::stoul(kv.at("t_steps")) : pipeline.config.t_steps;
                    const auto format = kv.count("wire") ? wire::parse_wire_format(kv.at("wire")) : wire::WireFormat::fp32;
                    const auto sync = kv.count("sync") ? parse_cloud_sync(kv.at("sync")) : CloudSync::own_fp32;
                    session->emplace(pipeline, steps, format, sync);
                    return {wire::encode_frame(wire::make_bytes_frame(MsgType::hello, f.session_id, 0))};
                }
                case MsgType::text_emb:
                    if (!*session) throw Error(Errc::state, "TEXT_EMB before HELLO");
                    (*session)->on_text_embedding(f);
                    return {};
                case MsgType::init_latent: {
                    if (!*session) throw Error(Errc::state, "INIT_LATENT before HELLO");
                    std::vector<Bytes> out;
                    for (const auto& nf : (*session)->on_initial_latent(f)) out.push_back(wire::encode_frame(nf));
                    return out;
                }
                case MsgType::end:
                    session->reset();
                    return {wire::encode_frame(wire::make_bytes_frame(MsgType::end, f.session_id, f.step_index))};
                default: throw Error(Errc::state, std::string("unexpected ") + wire::msg_type_name(f.type));
            }
        } catch (const std::exception& e) {
            session->reset();
            return {wire::encode_frame(wire::make_bytes_frame(MsgType::error, f.session_id, f.step_index, e.what()))};
        }
    };
}

LdmSplitRun generate_split_ldm(const Pipeline& pipeline, std::string_view prompt, PrngSeed seed, std::size_t t_steps,
                               const LdmSplitOptions& options, const ChannelConfig& channel) {
    LoopbackTransport transport(ldm_loopback_handler(pipeline));
    MeteredLink link(transport, channel);
    LdmSplitRun run;
    try {
        run.image = run_ldm_split_client(pipeline, prompt, seed, t_steps, options, link, &run.local_latent);
    } catch (const Error& e) {
        if (e.code() != Errc::channel && e.code() != Errc::frame) throw;
        run.error = e.what();
    }
    run.report = link.report();
    run.capture = link.capture();
    return run;
}

}  // namespace lsplit::ldm
