// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include <random>
#include <thread>

#include "lsplit/error.hpp"
#include "lsplit/node.hpp"
#include "lsplit/tcp.hpp"

namespace lsplit {

using wire::Frame;
using wire::MsgType;

namespace {

constexpr std::size_t kMaxRecords = 512;

nlohmann::json plan_json(const llm::PartitionPlan& p) {
    return {{"n", p.n}, {"x", p.x}, {"y", p.y}, {"ratio", p.ratio()}};
}

std::string dump(const nlohmann::json& j) { return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace); }

Image image_from_frame(const Frame& f) {
    if (f.dims.size() != 3 || f.dims[2] != 3) throw Error(Errc::channel, "image reply must be H x W x 3");
    const Tensor t = wire::frame_tensor(f);
    Image img(f.dims[1], f.dims[0]);
    const auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(std::clamp(v[i], 0.0f, 255.0f));
    return img;
}

}  // namespace

nlohmann::json to_json(const Outcome& o) {
    nlohmann::json j = {{"session", o.session_id},
                        {"ok", o.ok()},
                        {"experiment", to_json(o.experiment)},
                        {"report", to_json(o.report)}};
    if (!o.ok()) j["error"] = {{"code", o.cloud_unreachable ? "cloud_unreachable" : "session_aborted"}, {"message", o.error}};
    if (o.experiment.kind == ModelKind::llm) {
        j["plan"] = plan_json(o.plan);
        j["tokens"] = o.tokens;
        j["output"] = o.text;
    } else if (!o.image.rgb.empty()) {
        const auto ppm = encode_ppm(o.image);
        j["image"] = {{"width", o.image.width},
                      {"height", o.image.height},
                      {"ppm_base64", httplib::detail::base64_encode(std::string(ppm.begin(), ppm.end()))}};
    }
    return j;
}

struct LocalNode::Http {
    httplib::Server server;
    std::thread thread;
};

LocalNode::LocalNode(Settings settings, std::shared_ptr<CloudNode> cloud)
    : settings_(std::move(settings)),
      cloud_(std::move(cloud)),
      model_(llm::build_toy_llm(settings_.llm)),
      pipeline_(ldm::build_toy_ldm(settings_.ldm)),
      next_session_(1) {
    if (!cloud_) {
        // Several local nodes may share one cloud node; keep their ids apart.
        std::random_device rd;
        next_session_ = (static_cast<std::uint64_t>(rd()) << 32) | 1u;
    }
}

LocalNode::~LocalNode() { stop(); }

const llm::Partition& LocalNode::partition_for(const llm::PartitionPlan& plan) {
    std::lock_guard lock(partitions_mutex_);
    auto& slot = partitions_[{plan.x, plan.y}];
    if (!slot) {
        // Preparation phase: sub-models are cut from the local copy of the
        // weights; an in-process cloud receives its body the same way.
        slot = std::make_unique<llm::Partition>(llm::partition(model_, plan));
        if (cloud_) cloud_->deploy(plan);
    }
    return *slot;
}

std::unique_ptr<Transport> LocalNode::connect() {
    if (cloud_) {
        auto cloud = cloud_;
        return std::make_unique<LoopbackTransport>([cloud](std::span<const std::uint8_t> b) { return cloud->handle(b); });
    }
    return std::make_unique<TcpTransport>(settings_.cloud_addr);
}

void LocalNode::run_llm(Outcome& out, MeteredLink& link) {
    const auto& e = out.experiment;
    const auto sid = out.session_id;
    if (e.mode == Mode::cloud_only) {
        link.send(wire::make_bytes_frame(
            MsgType::hello, sid, 0,
            wire::encode_kv({{"kind", "llm-text"}, {"l_out", std::to_string(e.l_out)}, {"stop_at_eos", e.stop_at_eos ? "1" : "0"}})));
        expect_frame(link, MsgType::hello, 0);
        link.send(wire::make_bytes_frame(MsgType::text, sid, 0, e.prompt));
        const Frame reply = expect_frame(link, MsgType::text, 0);
        double spent = 0.0;
        {
            ScopedTimer timer(spent);
            for (auto b : reply.payload) out.tokens.push_back(b);
            out.text = llm::detokenize(out.tokens, settings_.llm.vocab);
        }
        link.add_local_compute(spent);
        link.set_items(out.tokens.size());
        link.send(wire::make_bytes_frame(MsgType::end, sid, 1));
        expect_frame(link, MsgType::end, 1);
        return;
    }

    const auto& part = partition_for(out.plan);
    llm::SplitOptions opts{e.caching, e.wire, e.stop_at_eos, sid};
    llm::LocalSession state;
    const auto prompt = llm::tokenize(e.prompt, settings_.llm.vocab);
    try {
        llm::run_split_client(part.head, part.tail, prompt, e.l_out, opts, link, state);
    } catch (...) {
        out.tokens = std::move(state.generated);
        throw;
    }
    out.tokens = std::move(state.generated);
    out.text = llm::detokenize(out.tokens, settings_.llm.vocab);
}

void LocalNode::run_ldm(Outcome& out, MeteredLink& link) {
    const auto& e = out.experiment;
    const auto sid = out.session_id;
    if (e.mode == Mode::cloud_only) {
        link.send(wire::make_bytes_frame(
            MsgType::hello, sid, 0,
            wire::encode_kv({{"kind", "ldm-text"}, {"t_steps", std::to_string(e.t_steps)}, {"seed", std::to_string(e.seed)}})));
        expect_frame(link, MsgType::hello, 0);
        link.send(wire::make_bytes_frame(MsgType::text, sid, 0, e.prompt));
        const Frame reply = expect_frame(link, MsgType::body_out, 0);
        double spent = 0.0;
        {
            ScopedTimer timer(spent);
            out.image = image_from_frame(reply);
        }
        link.add_local_compute(spent);
        link.set_items(1);
        link.send(wire::make_bytes_frame(MsgType::end, sid, 1));
        expect_frame(link, MsgType::end, 1);
        return;
    }
    ldm::LdmSplitOptions opts{e.wire, e.sync, sid};
    out.image = ldm::run_ldm_split_client(pipeline_, e.prompt, PrngSeed{e.seed}, e.t_steps, opts, link);
}

void LocalNode::run_local_only(Outcome& out) {
    const auto& e = out.experiment;
    double spent = 0.0;
    {
        ScopedTimer timer(spent);
        if (e.kind == ModelKind::llm) {
            out.tokens = llm::generate_monolithic(model_, llm::tokenize(e.prompt, settings_.llm.vocab), e.l_out, e.stop_at_eos);
            out.text = llm::detokenize(out.tokens, settings_.llm.vocab);
        } else {
            out.image = ldm::generate_monolithic_ldm(pipeline_, e.prompt, PrngSeed{e.seed}, e.t_steps);
        }
    }
    out.report.local_compute_s = spent;
    out.report.items = e.kind == ModelKind::llm ? out.tokens.size() : 1;
}

Outcome LocalNode::generate(const Experiment& e) {
    e.validate(settings_.llm);
    Outcome out;
    out.experiment = e;
    out.session_id = next_session_++;
    out.plan = e.resolve_plan(settings_.llm.n_blocks);

    auto finish = [&](std::shared_ptr<MeteredLink> link) {
        if (link) {
            out.report = link->report();
            out.capture = link->capture();
        }
        std::lock_guard lock(records_mutex_);
        records_[out.session_id] = Record{e, nullptr, out.report, out.capture};
        latest_ = out.session_id;
        while (records_.size() > kMaxRecords) records_.erase(records_.begin());
    };

    if (e.mode == Mode::local_only) {
        run_local_only(out);
        finish(nullptr);
        return out;
    }

    std::unique_ptr<Transport> transport;
    try {
        transport = connect();
    } catch (const Error& err) {
        out.error = err.what();
        out.cloud_unreachable = true;
        finish(nullptr);
        return out;
    }
    auto link = std::make_shared<MeteredLink>(*transport, settings_.channel);
    {
        std::lock_guard lock(records_mutex_);
        records_[out.session_id] = Record{e, link, {}, {}};
        latest_ = out.session_id;
    }
    try {
        if (e.kind == ModelKind::llm) {
            run_llm(out, *link);
        } else {
            run_ldm(out, *link);
        }
    } catch (const Error& err) {
        if (err.code() != Errc::channel && err.code() != Errc::frame) {
            finish(link);
            throw;
        }
        out.error = err.what();
    }
    finish(link);
    return out;
}

std::optional<TrafficReport> LocalNode::traffic(std::uint64_t session) const {
    std::lock_guard lock(records_mutex_);
    const auto it = records_.find(session);
    if (it == records_.end()) return std::nullopt;
    return it->second.live ? it->second.live->report() : it->second.report;
}

std::optional<CaptureLog> LocalNode::capture(std::uint64_t session) const {
    std::lock_guard lock(records_mutex_);
    const auto it = records_.find(session);
    if (it == records_.end()) return std::nullopt;
    return it->second.live ? it->second.live->capture() : it->second.capture;
}

std::optional<std::uint64_t> LocalNode::latest_session() const {
    std::lock_guard lock(records_mutex_);
    return latest_;
}

nlohmann::json LocalNode::capture_json(std::uint64_t session) const {
    std::string prompt;
    std::string mode;
    {
        std::lock_guard lock(records_mutex_);
        const auto it = records_.find(session);
        if (it == records_.end()) throw Error(Errc::parameter, "unknown session " + std::to_string(session));
        prompt = it->second.experiment.prompt;
        mode = mode_name(it->second.experiment.mode);
    }
    const CaptureLog cap = *capture(session);
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < cap.size(); ++i) {
        const auto& r = cap.records()[i];
        const auto decoded = wire::decode_frame(r.bytes);
        records.push_back({{"index", i},
                           {"timestamp_s", r.timestamp_s},
                           {"direction", direction_name(r.direction)},
                           {"type", decoded ? wire::msg_type_name(decoded.frame().type) : "UNDECODABLE"},
                           {"length", r.bytes.size()},
                           {"hexdump", hexdump_lines(r.bytes)}});
    }
    nlohmann::json leaks = nlohmann::json::array();
    const bool checked = prompt.size() >= kMinLeakLength;
    if (checked) {
        for (const auto& h : detect_plaintext_leak(cap, prompt)) {
            leaks.push_back({{"record", h.record}, {"offset", h.offset}, {"length", h.length}, {"secret_offset", h.secret_offset}});
        }
    }
    return {{"session", session},
            {"mode", mode},
            {"records", records},
            {"leak_check", checked},
            {"leak_count", leaks.size()},
            {"leaks", leaks}};
}

nlohmann::json LocalNode::config_json() const {
    auto j = to_json(settings_);
    j["cloud"] = cloud_ ? "in-process" : settings_.cloud_addr;
    return j;
}

int LocalNode::start(const std::string& bind) {
    if (http_) throw Error(Errc::state, "control API already running");
    const auto [host, port] = parse_host_port(bind);
    http_ = std::make_unique<Http>();
    auto& srv = http_->server;

    auto reply = [](httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_content(dump(body), "application/json");
    };
    auto error_body = [](std::string_view code, std::string_view message) {
        return nlohmann::json{{"error", {{"code", code}, {"message", message}}}};
    };
    auto session_param = [this](const httplib::Request& req) -> std::optional<std::uint64_t> {
        if (!req.has_param("session")) return latest_session();
        try {
            return std::stoull(req.get_param_value("session"));
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };

    srv.Post("/generate", [this, reply, error_body](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
        } catch (const nlohmann::json::exception& ex) {
            return reply(res, 400, error_body("bad_request", ex.what()));
        }
        try {
            const Outcome o = generate(experiment_from_json(body, settings_.defaults));
            reply(res, o.ok() ? 200 : 502, to_json(o));
        } catch (const Error& err) {
            reply(res, err.code() == Errc::channel ? 502 : 400, error_body(errc_name(err.code()), err.what()));
        } catch (const std::exception& ex) {
            reply(res, 500, error_body("internal", ex.what()));
        }
    });
    srv.Get("/traffic", [this, reply, error_body, session_param](const httplib::Request& req, httplib::Response& res) {
        const auto sid = session_param(req);
        const auto report = sid ? traffic(*sid) : std::nullopt;
        if (!report) return reply(res, 404, error_body("unknown_session", "no such session"));
        bool live = false;
        {
            std::lock_guard lock(records_mutex_);
            live = records_.at(*sid).live != nullptr;
        }
        reply(res, 200, {{"session", *sid}, {"live", live}, {"report", to_json(*report)}});
    });
    srv.Get("/capture", [this, reply, error_body, session_param](const httplib::Request& req, httplib::Response& res) {
        const auto sid = session_param(req);
        if (!sid || !capture(*sid)) return reply(res, 404, error_body("unknown_session", "no such session"));
        reply(res, 200, capture_json(*sid));
    });
    srv.Get("/config", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, 200, config_json()); });

    int bound = port;
    if (port == 0) {
        bound = srv.bind_to_any_port(host);
    } else if (!srv.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound <= 0) {
        http_.reset();
        throw Error(Errc::channel, "cannot bind control API on " + bind);
    }
    http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
    return bound;
}

void LocalNode::serve(const std::string& bind) {
    start(bind);
    http_->thread.join();
}

void LocalNode::stop() {
    if (!http_) return;
    http_->server.stop();
    if (http_->thread.joinable()) http_->thread.join();
    http_.reset();
}

}  // namespace lsplit
