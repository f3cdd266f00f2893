// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsplit/netsim.hpp"
#include "lsplit/tensor.hpp"
#include "lsplit/wire.hpp"

namespace lsplit::llm {

using TokenId = std::uint32_t;

struct LlmConfig {
    std::size_t n_blocks = 8;
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t vocab = 256;
    std::size_t max_len = 128;
    PrngSeed seed{42};

    void validate() const;
    /// The last vocabulary entry terminates generation.
    TokenId eos() const noexcept { return static_cast<TokenId>(vocab - 1); }
};

struct BlockWeights {
    Tensor ln1_gamma, ln1_beta;
    AttentionWeights attn;
    Tensor ln2_gamma, ln2_beta;
    Tensor w1, b1;  // D x 4D, 4D
    Tensor w2, b2;  // 4D x D, D
};

/// Token embedding -> N pre-norm decoder blocks -> final norm -> LM head.
struct Model {
    LlmConfig config;
    Tensor token_embedding;     // vocab x D
    Tensor position_embedding;  // max_len x D
    std::vector<BlockWeights> blocks;
    Tensor final_gamma, final_beta;
    Tensor lm_head;  // D x vocab

    std::size_t parameter_count() const;
};

/// Seeded weights: matrices uniform in [-1/sqrt(D), 1/sqrt(D)], norms at
/// gamma = 1 / beta = 0, biases zero.
Model build_toy_llm(const LlmConfig& config);

/// Byte-level toy tokenizer. Bytes that collide with EOS wrap to 0.
std::vector<TokenId> tokenize(std::string_view text, std::size_t vocab = 256);
std::string detokenize(std::span<const TokenId> tokens, std::size_t vocab = 256);

// --- partitioning ---------------------------------------------------------

/// Split indices: head = blocks [0, x), body = [x, y), tail = [y, n).
struct PartitionPlan {
    std::size_t n = 0;
    std::size_t x = 0;
    std::size_t y = 0;

    void validate() const;
    std::size_t local_layers() const noexcept { return x + (n - y); }
    std::size_t cloud_layers() const noexcept { return y - x; }
    /// "local:cloud", e.g. "2:30".
    std::string ratio() const;

    bool operator==(const PartitionPlan&) const = default;
};

/// Local budget m spread as ceil(m/2) front blocks and floor(m/2) back blocks.
PartitionPlan plan_partition(std::size_t n, std::size_t local_layer_budget);

/// KV caches of one block stack plus the number of positions processed.
struct StackCache {
    std::vector<KvCache> blocks;
    std::size_t positions = 0;

    void clear();
};

Tensor block_forward(const BlockWeights& block, const Tensor& x, KvCache& cache);

class BlockStack {
public:
    BlockStack() = default;
    BlockStack(std::vector<BlockWeights> blocks, std::size_t d_model, std::size_t max_len);

    std::size_t size() const noexcept { return blocks_.size(); }
    std::size_t d_model() const noexcept { return d_model_; }
    StackCache make_cache() const;
    /// Runs rows for positions cache.positions .. +rows-1 through every block.
    Tensor forward(const Tensor& x, StackCache& cache) const;

private:
    std::vector<BlockWeights> blocks_;
    std::size_t d_model_ = 0;
    std::size_t max_len_ = 0;
};

/// Embedding plus blocks [0, X). Runs on the local device.
class Head {
public:
    Head() = default;
    Head(LlmConfig config, Tensor token_embedding, Tensor position_embedding, BlockStack stack);

    const LlmConfig& config() const noexcept { return config_; }
    StackCache make_cache() const { return stack_.make_cache(); }
    std::size_t layers() const noexcept { return stack_.size(); }
    /// Hidden rows for the new positions only.
    Tensor forward(std::span<const TokenId> new_tokens, StackCache& cache) const;

private:
    LlmConfig config_;
    Tensor token_embedding_;
    Tensor position_embedding_;
    BlockStack stack_;
};

/// Blocks [X, Y). Runs on the cloud.
class Body {
public:
    Body() = default;
    explicit Body(BlockStack stack) : stack_(std::move(stack)) {}

    StackCache make_cache() const { return stack_.make_cache(); }
    std::size_t layers() const noexcept { return stack_.size(); }
    std::size_t d_model() const noexcept { return stack_.d_model(); }
    Tensor forward(const Tensor& hidden, StackCache& cache) const;

private:
    BlockStack stack_;
};

/// Blocks [Y, N), final norm and LM head. Runs on the local device.
class Tail {
public:
    Tail() = default;
    Tail(LlmConfig config, BlockStack stack, Tensor final_gamma, Tensor final_beta, Tensor lm_head);

    const LlmConfig& config() const noexcept { return config_; }
    StackCache make_cache() const { return stack_.make_cache(); }
    std::size_t layers() const noexcept { return stack_.size(); }
    /// Logits of the final new position.
    Tensor logits(const Tensor& hidden, StackCache& cache) const;
    /// Greedy token for the final new position.
    TokenId forward(const Tensor& hidden, StackCache& cache) const;

private:
    LlmConfig config_;
    BlockStack stack_;
    Tensor final_gamma_, final_beta_, lm_head_;
};

struct Partition {
    PartitionPlan plan;
    Head head;
    Body body;
    Tail tail;
};

Partition partition(const Model& model, const PartitionPlan& plan);

/// Argmax; ties go to the lower id.
TokenId argmax_token(std::span<const float> logits);

/// Cloud-only reference: greedy decoding over the whole model with KV caches.
std::vector<TokenId> generate_monolithic(const Model& model, std::span<const TokenId> prompt, std::size_t l_out,
                                         bool stop_at_eos = true);

// --- split generation -------------------------------------------------------

struct SplitOptions {
    bool caching = true;
    wire::WireFormat wire = wire::WireFormat::fp32;  // fp32 or fp16
    bool stop_at_eos = true;
    std::uint64_t session_id = 1;
};

/// Local-side state of one split session.
struct LocalSession {
    StackCache head_cache;
    StackCache tail_cache;
    Tensor body_output_cache;  // rows received from the cloud, held locally
    std::vector<TokenId> sequence;   // prompt followed by generated tokens
    std::vector<TokenId> generated;
    std::uint32_t step = 0;
};

/// Cloud-side state of one split session: receives head rows, answers with body rows.
class BodySession {
public:
    BodySession(const Body& body, bool caching, wire::WireFormat wire);

    /// Handles one HEAD_OUT frame and returns the BODY_OUT reply.
    wire::Frame on_head_out(const wire::Frame& frame);

    const Tensor& head_output_cache() const noexcept { return head_output_cache_; }
    std::uint32_t steps() const noexcept { return step_; }

private:
    const Body& body_;
    bool caching_;
    wire::WireFormat wire_;
    StackCache cache_;
    Tensor head_output_cache_;
    std::uint32_t step_ = 0;
};

/// HELLO payload describing an LLM split session.
std::string llm_hello_payload(const SplitOptions& options, const PartitionPlan& plan);

/// Drives the local half of a split generation over `link`:
/// HELLO, then one HEAD_OUT / BODY_OUT exchange per token, then END.
/// Progress is kept in `state`, so a failed session still shows what it produced.
void run_split_client(const Head& head, const Tail& tail, std::span<const TokenId> prompt, std::size_t l_out,
                      const SplitOptions& options, MeteredLink& link, LocalSession& state);

/// Answers LLM session frames for a single body (HELLO, HEAD_OUT, END).
FrameHandler body_loopback_handler(const Body& body);

struct SplitRun {
    std::vector<TokenId> tokens;
    TrafficReport report;
    CaptureLog capture;
    std::string error;  // empty on success; otherwise the session was aborted
};

/// Head and tail run locally, the body behind a simulated channel.
SplitRun generate_split(const Head& head, const Body& body, const Tail& tail, std::span<const TokenId> prompt,
                        std::size_t l_out, const SplitOptions& options = {}, const ChannelConfig& channel = {});

}  // namespace lsplit::llm
