// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsplit/image.hpp"
#include "lsplit/netsim.hpp"
#include "lsplit/tensor.hpp"
#include "lsplit/wire.hpp"

namespace lsplit::ldm {

struct LdmConfig {
    std::size_t channels = 4;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t t_steps = 10;
    std::size_t embed_dim = 64;
    std::size_t hidden = 32;
    PrngSeed seed{42};  // model weights; the sampling seed is separate

    void validate() const;
    Shape latent_shape() const { return {1, channels, height, width}; }
};

/// Hashed byte n-gram (n = 1..3) embedding, L2-normalized. Empty text gives zeros.
Tensor encode_text(std::string_view prompt, std::size_t embed_dim);

/// i.i.d. standard normal latent of shape (1, C, h, w).
Tensor sample_initial_latent(const LdmConfig& config, PrngSeed seed);

/// Toy U-Net: per latent pixel, [value, 3x3 neighbourhood mean] -> linear ->
/// + text/timestep conditioning -> GELU -> linear, added back to the input.
class NoisePredictor {
public:
    NoisePredictor() = default;
    NoisePredictor(const LdmConfig& config, Prng& rng);

    Tensor predict(const Tensor& latent, const Tensor& text_emb, std::size_t t) const;

private:
    Tensor conditioning(const Tensor& text_emb, std::size_t t) const;

    LdmConfig config_;
    Tensor w_embed_;  // E x H
    Tensor w_in_;     // 2C x H
    Tensor b_in_;     // H
    Tensor w_out_;    // H x C
    Tensor b_out_;    // C
};

/// latent - noise / T_steps.
Tensor denoise_step(const Tensor& latent, const Tensor& noise, std::size_t t, std::size_t t_steps);

/// Per-pixel linear C -> RGB, 2x nearest upsample, 128 + 64 v rounded and clamped.
class ImageDecoder {
public:
    ImageDecoder() = default;
    ImageDecoder(const LdmConfig& config, Prng& rng);

    Image decode(const Tensor& latent) const;
    /// k with |img(a) - img(b)| <= k |a - b|_inf + 1 (the +1 covers rounding).
    double lipschitz_bound() const;

private:
    LdmConfig config_;
    Tensor weights_;  // 3 x C
};

inline constexpr float kDecodeOffset = 128.0f;
inline constexpr float kDecodeGain = 64.0f;

struct Pipeline {
    LdmConfig config;
    NoisePredictor unet;
    ImageDecoder decoder;
};

Pipeline build_toy_ldm(const LdmConfig& config);

/// Timestep used at denoising iteration k (counts down from T-1).
inline std::size_t timestep_at(std::size_t k, std::size_t t_steps) { return t_steps - 1 - k; }

/// Cloud-only reference loop.
Image generate_monolithic_ldm(const Pipeline& pipeline, std::string_view prompt, PrngSeed seed, std::size_t t_steps);

// --- split execution ----------------------------------------------------------

/// Which noise the cloud-side denoiser applies to its own latent.
enum class CloudSync { own_fp32, dequantized };
const char* cloud_sync_name(CloudSync s) noexcept;
CloudSync parse_cloud_sync(std::string_view name);

struct LdmSplitOptions {
    wire::WireFormat wire = wire::WireFormat::fp32;
    CloudSync sync = CloudSync::own_fp32;
    std::uint64_t session_id = 1;
};

std::string ldm_hello_payload(const LdmSplitOptions& options, std::size_t t_steps);

/// Cloud half: noise prediction plus its own denoiser.
class LdmCloudSession {
public:
    LdmCloudSession(const Pipeline& pipeline, std::size_t t_steps, wire::WireFormat wire, CloudSync sync);

    void on_text_embedding(const wire::Frame& frame);
    /// Runs every timestep and returns one NOISE frame per step.
    std::vector<wire::Frame> on_initial_latent(const wire::Frame& frame);

    const Tensor& latent() const noexcept { return latent_; }

private:
    const Pipeline& pipeline_;
    std::size_t t_steps_;
    wire::WireFormat wire_;
    CloudSync sync_;
    std::optional<Tensor> text_emb_;
    Tensor latent_;
};

/// Local half: text encoder + sampler, then denoiser + decoder. Returns the
/// image; the tail's final latent is written to `final_latent` when given.
Image run_ldm_split_client(const Pipeline& pipeline, std::string_view prompt, PrngSeed seed, std::size_t t_steps,
                           const LdmSplitOptions& options, MeteredLink& link, Tensor* final_latent = nullptr);

/// Answers LDM session frames for one pipeline (HELLO, TEXT_EMB, INIT_LATENT, END).
FrameHandler ldm_loopback_handler(const Pipeline& pipeline);

struct LdmSplitRun {
    Image image;
    Tensor local_latent;
    TrafficReport report;
    CaptureLog capture;
    std::string error;
};

LdmSplitRun generate_split_ldm(const Pipeline& pipeline, std::string_view prompt, PrngSeed seed, std::size_t t_steps,
                               const LdmSplitOptions& options = {}, const ChannelConfig& channel = {});

}  // namespace lsplit::ldm
