// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>

#include "lsplit/error.hpp"
#include "lsplit/node.hpp"

namespace lsplit {

using wire::Frame;
using wire::MsgType;

namespace {

std::string kv_get(const wire::KeyValues& kv, const std::string& key, const std::string& fallback) {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::size_t kv_size(const wire::KeyValues& kv, const std::string& key, std::size_t fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw Error(Errc::parameter, "HELLO field " + key + " is not a number");
    }
}

class LlmBodyAdapter final : public CloudSession {
public:
    LlmBodyAdapter(const llm::Body& body, bool caching, wire::WireFormat format) : session_(body, caching, format) {}
    std::vector<Frame> on_frame(const Frame& f) override {
        if (f.type != MsgType::head_out) throw Error(Errc::state, std::string("unexpected ") + wire::msg_type_name(f.type));
        return {session_.on_head_out(f)};
    }

private:
    llm::BodySession session_;
};

class LdmNoiseAdapter final : public CloudSession {
public:
    LdmNoiseAdapter(const ldm::Pipeline& p, std::size_t t_steps, wire::WireFormat format, ldm::CloudSync sync)
        : session_(p, t_steps, format, sync) {}
    std::vector<Frame> on_frame(const Frame& f) override {
        switch (f.type) {
            case MsgType::text_emb: session_.on_text_embedding(f); return {};
            case MsgType::init_latent: return session_.on_initial_latent(f);
            default: throw Error(Errc::state, std::string("unexpected ") + wire::msg_type_name(f.type));
        }
    }

private:
    ldm::LdmCloudSession session_;
};

/// Cloud-only text generation: the prompt arrives and the answer leaves as plaintext.
class LlmTextSession final : public CloudSession {
public:
    LlmTextSession(const llm::Model& m, std::size_t l_out, bool stop_at_eos) : model_(m), l_out_(l_out), stop_(stop_at_eos) {
        if (m.config.vocab > 256) throw Error(Errc::parameter, "text mode needs vocab <= 256");
    }
    std::vector<Frame> on_frame(const Frame& f) override {
        if (f.type != MsgType::text) throw Error(Errc::state, std::string("unexpected ") + wire::msg_type_name(f.type));
        const auto prompt = llm::tokenize(wire::payload_text(f), model_.config.vocab);
        const auto tokens = llm::generate_monolithic(model_, prompt, l_out_, stop_);
        std::string reply(tokens.size(), '\0');
        for (std::size_t i = 0; i < tokens.size(); ++i) reply[i] = static_cast<char>(tokens[i]);
        return {wire::make_bytes_frame(MsgType::text, f.session_id, f.step_index, reply)};
    }

private:
    const llm::Model& model_;
    std::size_t l_out_;
    bool stop_;
};

/// Cloud-only image generation: plaintext prompt in, 8-bit RGB image out.
class LdmTextSession final : public CloudSession {
public:
    LdmTextSession(const ldm::Pipeline& p, std::size_t t_steps, std::uint64_t seed) : pipeline_(p), t_steps_(t_steps), seed_(seed) {
        if (t_steps < 1) throw Error(Errc::parameter, "t_steps must be at least 1");
    }
    std::vector<Frame> on_frame(const Frame& f) override {
        if (f.type != MsgType::text) throw Error(Errc::state, std::string("unexpected ") + wire::msg_type_name(f.type));
        const Image img = ldm::generate_monolithic_ldm(pipeline_, wire::payload_text(f), PrngSeed{seed_}, t_steps_);
        Frame out;
        out.type = MsgType::body_out;
        out.dtype = DType::int_packed;
        out.session_id = f.session_id;
        out.step_index = f.step_index;
        out.dims = {static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width), 3};
        out.quant = QuantParams{8, 1.0f, 0};
        out.payload = img.rgb;
        return {out};
    }

private:
    const ldm::Pipeline& pipeline_;
    std::size_t t_steps_;
    std::uint64_t seed_;
};

Bytes error_frame(std::uint64_t session, std::uint32_t step, std::string_view message) {
    return wire::encode_frame(wire::make_bytes_frame(MsgType::error, session, step, message));
}

}  // namespace

CloudNode::CloudNode(llm::Model model, ldm::Pipeline pipeline, double idle_timeout_s)
    : model_(std::move(model)), pipeline_(std::move(pipeline)), idle_timeout_(idle_timeout_s) {}

void CloudNode::deploy(const llm::PartitionPlan& plan) {
    auto part = llm::partition(model_, plan);
    std::lock_guard lock(deploy_mutex_);
    auto& slot = bodies_[{plan.x, plan.y}];
    if (!slot) slot = std::make_unique<llm::Body>(std::move(part.body));
}

bool CloudNode::is_deployed(const llm::PartitionPlan& plan) const {
    std::lock_guard lock(deploy_mutex_);
    return plan.n == model_.config.n_blocks && bodies_.count({plan.x, plan.y}) > 0;
}

std::unique_ptr<CloudSession> CloudNode::open_session(const Frame& hello) {
    const auto kv = wire::decode_kv(wire::payload_text(hello));
    const auto kind = kv_get(kv, "kind", "");
    if (kind == "llm") {
        const llm::PartitionPlan plan{model_.config.n_blocks, kv_size(kv, "x", 0), kv_size(kv, "y", model_.config.n_blocks)};
        plan.validate();
        const llm::Body* body = nullptr;
        {
            std::lock_guard lock(deploy_mutex_);
            const auto it = bodies_.find({plan.x, plan.y});
            if (it != bodies_.end()) body = it->second.get();
        }
        if (!body) {
            throw Error(Errc::plan, "split (" + std::to_string(plan.x) + ", " + std::to_string(plan.y) + ") is not deployed");
        }
        return std::make_unique<LlmBodyAdapter>(*body, kv_get(kv, "caching", "1") == "1",
                                                wire::parse_wire_format(kv_get(kv, "wire", "fp32")));
    }
    if (kind == "ldm") {
        return std::make_unique<LdmNoiseAdapter>(pipeline_, kv_size(kv, "t_steps", pipeline_.config.t_steps),
                                                 wire::parse_wire_format(kv_get(kv, "wire", "fp32")),
                                                 ldm::parse_cloud_sync(kv_get(kv, "sync", "own-fp32")));
    }
    if (kind == "llm-text") {
        return std::make_unique<LlmTextSession>(model_, kv_size(kv, "l_out", 32), kv_get(kv, "stop_at_eos", "1") == "1");
    }
    if (kind == "ldm-text") {
        return std::make_unique<LdmTextSession>(pipeline_, kv_size(kv, "t_steps", pipeline_.config.t_steps),
                                                kv_size(kv, "seed", 42));
    }
    throw Error(Errc::parameter, "unknown session kind '" + kind + "'");
}

void CloudNode::drop(std::uint64_t session_id) {
    std::lock_guard lock(sessions_mutex_);
    sessions_.erase(session_id);
}

std::vector<Bytes> CloudNode::handle(std::span<const std::uint8_t> bytes) {
    const auto now = Clock::now();
    evict_idle(now);

    auto decoded = wire::decode_frame(bytes);
    if (!decoded) {
        // Best effort: if the header still names a session, that session ends here.
        std::uint64_t session = 0;
        if (bytes.size() >= 16 && std::memcmp(bytes.data(), wire::kMagic, 4) == 0) {
            for (int i = 7; i >= 0; --i) session = (session << 8) | bytes[8 + i];
            drop(session);
        }
        return {error_frame(session, 0, std::string("malformed frame: ") + wire::decode_error_name(decoded.error()))};
    }
    const Frame& f = decoded.frame();

    if (f.type == MsgType::hello) {
        std::unique_ptr<CloudSession> session;
        try {
            session = open_session(f);
        } catch (const std::exception& e) {
            return {error_frame(f.session_id, f.step_index, e.what())};
        }
        auto slot = std::make_shared<Slot>();
        slot->session = std::move(session);
        slot->last_seen = now;
        {
            std::lock_guard lock(sessions_mutex_);
            if (!sessions_.emplace(f.session_id, slot).second) {
                return {error_frame(f.session_id, f.step_index, "session " + std::to_string(f.session_id) + " is already open")};
            }
        }
        return {wire::encode_frame(wire::make_bytes_frame(MsgType::hello, f.session_id, 0))};
    }

    std::shared_ptr<Slot> slot;
    {
        std::lock_guard lock(sessions_mutex_);
        const auto it = sessions_.find(f.session_id);
        if (it != sessions_.end()) slot = it->second;
    }
    if (!slot) return {error_frame(f.session_id, f.step_index, "unknown session " + std::to_string(f.session_id))};

    std::lock_guard slot_lock(slot->mutex);
    slot->last_seen = now;
    if (f.type == MsgType::end) {
        drop(f.session_id);
        return {wire::encode_frame(wire::make_bytes_frame(MsgType::end, f.session_id, f.step_index))};
    }
    try {
        std::vector<Bytes> out;
        for (const auto& reply : slot->session->on_frame(f)) out.push_back(wire::encode_frame(reply));
        slot->last_seen = Clock::now();
        return out;
    } catch (const std::exception& e) {
        drop(f.session_id);
        return {error_frame(f.session_id, f.step_index, e.what())};
    }
}

FrameHandler CloudNode::handler() {
    return [this](std::span<const std::uint8_t> bytes) { return handle(bytes); };
}

std::size_t CloudNode::evict_idle(Clock::time_point now) {
    std::vector<std::shared_ptr<Slot>> idle;
    std::lock_guard lock(sessions_mutex_);
    std::size_t evicted = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        // A slot that is busy is in use, hence not idle.
        std::unique_lock slot_lock(it->second->mutex, std::try_to_lock);
        if (slot_lock.owns_lock() && now - it->second->last_seen > idle_timeout_) {
            slot_lock.unlock();
            it = sessions_.erase(it);
            ++evicted;
        } else {
            ++it;
        }
    }
    return evicted;
}

std::size_t CloudNode::session_count() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
}

}  // namespace lsplit
