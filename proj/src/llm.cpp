// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/llm.hpp"

#include <cmath>

#include "lsplit/error.hpp"

namespace lsplit::llm {

void LlmConfig::validate() const {
    if (n_blocks < 2) throw Error(Errc::parameter, "LLM needs at least 2 decoder blocks");
    if (d_model == 0 || heads == 0 || d_model % heads != 0) throw Error(Errc::parameter, "d_model must be divisible by heads");
    if (vocab < 2) throw Error(Errc::parameter, "vocab must be at least 2");
    if (max_len == 0) throw Error(Errc::parameter, "max_len must be positive");
}

std::size_t Model::parameter_count() const {
    std::size_t n = token_embedding.numel() + position_embedding.numel() + final_gamma.numel() + final_beta.numel() +
                    lm_head.numel();
    for (const auto& b : blocks) {
        for (const Tensor* t : {&b.ln1_gamma, &b.ln1_beta, &b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo, &b.ln2_gamma,
                                &b.ln2_beta, &b.w1, &b.b1, &b.w2, &b.b2}) {
            n += t->numel();
        }
    }
    return n;
}

namespace {

Tensor filled(std::size_t n, float v) {
    Tensor t({n});
    for (auto& x : t.values()) x = v;
    return t;
}

}  // namespace

Model build_toy_llm(const LlmConfig& config) {
    config.validate();
    const auto d = config.d_model;
    const float bound = 1.0f / std::sqrt(static_cast<float>(d));
    Prng rng(config.seed);

    Model m;
    m.config = config;
    m.token_embedding = uniform_tensor({config.vocab, d}, bound, rng);
    m.position_embedding = uniform_tensor({config.max_len, d}, bound, rng);
    m.blocks.reserve(config.n_blocks);
    for (std::size_t i = 0; i < config.n_blocks; ++i) {
        BlockWeights b;
        b.ln1_gamma = filled(d, 1.0f);
        b.ln1_beta = filled(d, 0.0f);
        b.attn.heads = config.heads;
        b.attn.wq = uniform_tensor({d, d}, bound, rng);
        b.attn.wk = uniform_tensor({d, d}, bound, rng);
        b.attn.wv = uniform_tensor({d, d}, bound, rng);
        b.attn.wo = uniform_tensor({d, d}, bound, rng);
        b.ln2_gamma = filled(d, 1.0f);
        b.ln2_beta = filled(d, 0.0f);
        b.w1 = uniform_tensor({d, 4 * d}, bound, rng);
        b.b1 = filled(4 * d, 0.0f);
        b.w2 = uniform_tensor({4 * d, d}, bound, rng);
        b.b2 = filled(d, 0.0f);
        m.blocks.push_back(std::move(b));
    }
    m.final_gamma = filled(d, 1.0f);
    m.final_beta = filled(d, 0.0f);
    m.lm_head = uniform_tensor({d, config.vocab}, bound, rng);
    return m;
}

std::vector<TokenId> tokenize(std::string_view text, std::size_t vocab) {
    const auto eos = static_cast<TokenId>(vocab - 1);
    std::vector<TokenId> out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        auto t = static_cast<TokenId>(c % vocab);
        out.push_back(t == eos ? 0 : t);
    }
    return out;
}

std::string detokenize(std::span<const TokenId> tokens, std::size_t vocab) {
    std::string out;
    for (auto t : tokens) {
        if (t == vocab - 1) continue;
        out.push_back(t < 256 ? static_cast<char>(t) : '?');
    }
    return out;
}

void PartitionPlan::validate() const {
    if (x > y || y > n) {
        throw Error(Errc::plan, "invalid split (X=" + std::to_string(x) + ", Y=" + std::to_string(y) +
                                    ") for N=" + std::to_string(n) + "; need 0 <= X <= Y <= N");
    }
}

std::string PartitionPlan::ratio() const {
    return std::to_string(local_layers()) + ":" + std::to_string(cloud_layers());
}

PartitionPlan plan_partition(std::size_t n, std::size_t local_layer_budget) {
    if (local_layer_budget > n) {
        throw Error(Errc::plan, "local layer budget " + std::to_string(local_layer_budget) + " exceeds N=" + std::to_string(n));
    }
    const auto front = (local_layer_budget + 1) / 2;
    const auto back = local_layer_budget / 2;
    return {n, front, n - back};
}

void StackCache::clear() {
    for (auto& c : blocks) c.clear();
    positions = 0;
}

Tensor block_forward(const BlockWeights& block, const Tensor& x, KvCache& cache) {
    Tensor h = x;
    add_inplace(h, causal_attention(layer_norm(x, block.ln1_gamma, block.ln1_beta), cache, block.attn));
    Tensor m = matmul(layer_norm(h, block.ln2_gamma, block.ln2_beta), block.w1);
    add_row_bias_inplace(m, block.b1);
    gelu_inplace(m);
    m = matmul(m, block.w2);
    add_row_bias_inplace(m, block.b2);
    add_inplace(h, m);
    return h;
}

BlockStack::BlockStack(std::vector<BlockWeights> blocks, std::size_t d_model, std::size_t max_len)
    : blocks_(std::move(blocks)), d_model_(d_model), max_len_(max_len) {}

StackCache BlockStack::make_cache() const {
    StackCache c;
    c.blocks.assign(blocks_.size(), KvCache(d_model_));
    return c;
}

Tensor BlockStack::forward(const Tensor& x, StackCache& cache) const {
    if (x.rank() != 2 || x.dim(1) != d_model_) throw Error(Errc::dimension, "hidden rows must be r x D");
    if (cache.blocks.size() != blocks_.size()) throw Error(Errc::state, "cache does not belong to this block stack");
    if (cache.positions + x.rows() > max_len_) {
        throw Error(Errc::overflow, "position " + std::to_string(cache.positions + x.rows()) + " exceeds max_len " +
                                        std::to_string(max_len_));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) h = block_forward(blocks_[i], h, cache.blocks[i]);
    cache.positions += x.rows();
    return h;
}

Head::Head(LlmConfig config, Tensor token_embedding, Tensor position_embedding, BlockStack stack)
    : config_(config),
      token_embedding_(std::move(token_embedding)),
      position_embedding_(std::move(position_embedding)),
      stack_(std::move(stack)) {}

Tensor Head::forward(std::span<const TokenId> new_tokens, StackCache& cache) const {
    const auto d = config_.d_model;
    const auto start = cache.positions;
    if (start + new_tokens.size() > config_.max_len) {
        throw Error(Errc::overflow, "sequence of " + std::to_string(start + new_tokens.size()) + " exceeds max_len " +
                                        std::to_string(config_.max_len));
    }
    Tensor x({new_tokens.size(), d});
    for (std::size_t r = 0; r < new_tokens.size(); ++r) {
        if (new_tokens[r] >= config_.vocab) throw Error(Errc::parameter, "token id outside vocabulary");
        const auto tok = token_embedding_.row(new_tokens[r]);
        const auto pos = position_embedding_.row(start + r);
        auto row = x.row(r);
        for (std::size_t j = 0; j < d; ++j) row[j] = tok[j] + pos[j];
    }
    return stack_.forward(x, cache);
}

Tensor Body::forward(const Tensor& hidden, StackCache& cache) const { return stack_.forward(hidden, cache); }

Tail::Tail(LlmConfig config, BlockStack stack, Tensor final_gamma, Tensor final_beta, Tensor lm_head)
    : config_(config),
      stack_(std::move(stack)),
      final_gamma_(std::move(final_gamma)),
      final_beta_(std::move(final_beta)),
      lm_head_(std::move(lm_head)) {}

Tensor Tail::logits(const Tensor& hidden, StackCache& cache) const {
    if (hidden.rows() == 0) throw Error(Errc::dimension, "tail needs at least one hidden row");
    const Tensor h = stack_.forward(hidden, cache);
    const Tensor last = h.slice_rows(h.rows() - 1, h.rows());
    return matmul(layer_norm(last, final_gamma_, final_beta_), lm_head_);
}

TokenId Tail::forward(const Tensor& hidden, StackCache& cache) const {
    return argmax_token(logits(hidden, cache).values());
}

Partition partition(const Model& model, const PartitionPlan& plan) {
    plan.validate();
    const auto& cfg = model.config;
    if (plan.n != cfg.n_blocks) {
        throw Error(Errc::plan, "plan is for N=" + std::to_string(plan.n) + " but model has " +
                                    std::to_string(cfg.n_blocks) + " blocks");
    }
    auto slice = [&](std::size_t begin, std::size_t end) {
        return BlockStack(std::vector<BlockWeights>(model.blocks.begin() + begin, model.blocks.begin() + end),
                          cfg.d_model, cfg.max_len);
    };
    return {plan,
            Head(cfg, model.token_embedding, model.position_embedding, slice(0, plan.x)),
            Body(slice(plan.x, plan.y)),
            Tail(cfg, slice(plan.y, plan.n), model.final_gamma, model.final_beta, model.lm_head)};
}

TokenId argmax_token(std::span<const float> logits) {
    if (logits.empty()) throw Error(Errc::dimension, "empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<TokenId>(best);
}

std::vector<TokenId> generate_monolithic(const Model& model, std::span<const TokenId> prompt, std::size_t l_out,
                                         bool stop_at_eos) {
    const auto& cfg = model.config;
    if (prompt.empty()) throw Error(Errc::parameter, "prompt must contain at least one token");
    if (prompt.size() + l_out > cfg.max_len) {
        throw Error(Errc::overflow, "L_in + L_out = " + std::to_string(prompt.size() + l_out) + " exceeds max_len " +
                                        std::to_string(cfg.max_len));
    }
    const auto d = cfg.d_model;
    std::vector<KvCache> caches(cfg.n_blocks, KvCache(d));
    std::vector<TokenId> out;
    std::vector<TokenId> pending(prompt.begin(), prompt.end());
    std::size_t position = 0;

    for (std::size_t step = 0; step < l_out; ++step) {
        Tensor x({pending.size(), d});
        for (std::size_t r = 0; r < pending.size(); ++r) {
            if (pending[r] >= cfg.vocab) throw Error(Errc::parameter, "token id outside vocabulary");
            const auto tok = model.token_embedding.row(pending[r]);
            const auto pos = model.position_embedding.row(position + r);
            auto row = x.row(r);
            for (std::size_t j = 0; j < d; ++j) row[j] = tok[j] + pos[j];
        }
        position += pending.size();
        for (std::size_t b = 0; b < cfg.n_blocks; ++b) x = block_forward(model.blocks[b], x, caches[b]);
        const Tensor last = x.slice_rows(x.rows() - 1, x.rows());
        const Tensor logits = matmul(layer_norm(last, model.final_gamma, model.final_beta), model.lm_head);
        const TokenId next = argmax_token(logits.values());
        out.push_back(next);
        if (stop_at_eos && next == cfg.eos()) break;
        pending.assign(1, next);
    }
    return out;
}

}  // namespace lsplit::llm
