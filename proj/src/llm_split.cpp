// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include <memory>
#include <optional>

#include "lsplit/error.hpp"
#include "lsplit/llm.hpp"

namespace lsplit::llm {

using wire::Frame;
using wire::MsgType;

BodySession::BodySession(const Body& body, bool caching, wire::WireFormat wire)
    : body_(body), caching_(caching), wire_(wire), cache_(body.make_cache()) {
    if (wire != wire::WireFormat::fp32 && wire != wire::WireFormat::fp16) {
        throw Error(Errc::parameter, "LLM hidden states travel as fp32 or fp16");
    }
}

Frame BodySession::on_head_out(const Frame& frame) {
    if (frame.type != MsgType::head_out) throw Error(Errc::state, "expected HEAD_OUT");
    if (frame.step_index != step_) {
        throw Error(Errc::state, "HEAD_OUT for step " + std::to_string(frame.step_index) + ", expected " +
                                     std::to_string(step_));
    }
    const Tensor rows = wire::frame_tensor(frame);
    if (rows.rank() != 2 || rows.dim(1) != body_.d_model()) throw Error(Errc::dimension, "HEAD_OUT must be r x D");

    Tensor out;
    if (caching_) {
        head_output_cache_.append_rows(rows);
        out = body_.forward(rows, cache_);
    } else {
        head_output_cache_ = rows;
        cache_.clear();
        out = body_.forward(rows, cache_);
    }
    return wire::make_tensor_frame(MsgType::body_out, frame.session_id, step_++, out, wire_);
}

std::string llm_hello_payload(const SplitOptions& options, const PartitionPlan& plan) {
    return wire::encode_kv({{"kind", "llm"},
                            {"x", std::to_string(plan.x)},
                            {"y", std::to_string(plan.y)},
                            {"caching", options.caching ? "1" : "0"},
                            {"wire", wire::wire_format_name(options.wire)}});
}

void run_split_client(const Head& head, const Tail& tail, std::span<const TokenId> prompt, std::size_t l_out,
                      const SplitOptions& options, MeteredLink& link, LocalSession& state) {
    const auto& cfg = head.config();
    if (prompt.empty()) throw Error(Errc::parameter, "prompt must contain at least one token");
    if (prompt.size() + l_out > cfg.max_len) {
        throw Error(Errc::overflow, "L_in + L_out = " + std::to_string(prompt.size() + l_out) + " exceeds max_len " +
                                        std::to_string(cfg.max_len));
    }
    const auto session = options.session_id;
    const PartitionPlan plan{cfg.n_blocks, head.layers(), cfg.n_blocks - tail.layers()};
    state = LocalSession{};
    state.head_cache = head.make_cache();
    state.tail_cache = tail.make_cache();
    state.sequence.assign(prompt.begin(), prompt.end());

    link.send(wire::make_bytes_frame(MsgType::hello, session, 0, llm_hello_payload(options, plan)));
    expect_frame(link, MsgType::hello, 0);

    for (std::size_t i = 0; i < l_out; ++i) {
        Tensor hidden;
        double spent = 0.0;
        {
            ScopedTimer timer(spent);
            if (options.caching) {
                const std::span<const TokenId> fresh =
                    i == 0 ? std::span<const TokenId>(state.sequence) : std::span<const TokenId>(&state.sequence.back(), 1);
                hidden = head.forward(fresh, state.head_cache);
            } else {
                state.head_cache.clear();
                hidden = head.forward(state.sequence, state.head_cache);
            }
        }
        link.add_local_compute(spent);
        link.send(wire::make_tensor_frame(MsgType::head_out, session, state.step, hidden, options.wire));
        const Tensor body_rows = wire::frame_tensor(expect_frame(link, MsgType::body_out, state.step));

        TokenId next;
        spent = 0.0;
        {
            ScopedTimer timer(spent);
            if (options.caching) {
                state.body_output_cache.append_rows(body_rows);
            } else {
                state.body_output_cache = body_rows;
                state.tail_cache.clear();
            }
            next = tail.forward(body_rows, state.tail_cache);
        }
        link.add_local_compute(spent);
        state.sequence.push_back(next);
        state.generated.push_back(next);
        ++state.step;
        link.set_items(state.generated.size());
        if (options.stop_at_eos && next == cfg.eos()) break;
    }

    link.send(wire::make_bytes_frame(MsgType::end, session, state.step));
    expect_frame(link, MsgType::end, state.step);
}

FrameHandler body_loopback_handler(const Body& body) {
    auto session = std::make_shared<std::optional<BodySession>>();
    return [&body, session](std::span<const std::uint8_t> bytes) -> std::vector<Bytes> {
        auto decoded = wire::decode_frame(bytes);
        if (!decoded) {
            return {wire::encode_frame(wire::make_bytes_frame(MsgType::error, 0, 0, wire::decode_error_name(decoded.error())))};
        }
        const Frame& f = decoded.frame();
        try {
            switch (f.type) {
                case MsgType::hello: {
                    const auto kv = wire::decode_kv(wire::payload_text(f));
                    const bool caching = kv.count("caching") ? kv.at("caching") == "1" : true;
                    const auto format = kv.count("wire") ? wire::parse_wire_format(kv.at("wire")) : wire::WireFormat::fp32;
                    session->emplace(body, caching, format);
                    return {wire::encode_frame(wire::make_bytes_frame(MsgType::hello, f.session_id, 0))};
                }
                case MsgType::head_out:
                    if (!*session) throw Error(Errc::state, "HEAD_OUT before HELLO");
                    return {wire::encode_frame((*session)->on_head_out(f))};
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

SplitRun generate_split(const Head& head, const Body& body, const Tail& tail, std::span<const TokenId> prompt,
                        std::size_t l_out, const SplitOptions& options, const ChannelConfig& channel) {
    LoopbackTransport transport(body_loopback_handler(body));
    MeteredLink link(transport, channel);
    LocalSession state;
    SplitRun run;
    try {
        run_split_client(head, tail, prompt, l_out, options, link, state);
    } catch (const Error& e) {
        if (e.code() != Errc::channel && e.code() != Errc::frame) throw;
        run.error = e.what();
    }
    run.tokens = std::move(state.generated);
    run.report = link.report();
    run.capture = link.capture();
    return run;
}

}  // namespace lsplit::llm
