// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lsplit/config.hpp"
#include "lsplit/image.hpp"
#include "lsplit/ldm.hpp"
#include "lsplit/llm.hpp"
#include "lsplit/netsim.hpp"

namespace lsplit {

/// One session's cloud-side protocol state.
class CloudSession {
public:
    virtual ~CloudSession() = default;
    /// Frames to send back; an exception tears the session down.
    virtual std::vector<wire::Frame> on_frame(const wire::Frame& frame) = 0;
};

/// Cloud node: serves body sub-models, the LDM noise predictor and the
/// plaintext cloud-only baselines for any number of concurrent sessions.
///
/// HELLO payload keys: kind = llm | ldm | llm-text | ldm-text, plus
///   llm:      x, y, caching (0/1), wire
///   ldm:      t_steps, wire, sync
///   llm-text: l_out, stop_at_eos (0/1)
///   ldm-text: t_steps, seed
class CloudNode {
public:
    using Clock = std::chrono::steady_clock;

    CloudNode(llm::Model model, ldm::Pipeline pipeline, double idle_timeout_s = 60.0);

    /// Preparation phase: installs the body sub-model for `plan`. Sessions may
    /// only ask for deployed plans.
    void deploy(const llm::PartitionPlan& plan);
    bool is_deployed(const llm::PartitionPlan& plan) const;

    /// Handles one encoded frame and returns the encoded replies.
    std::vector<Bytes> handle(std::span<const std::uint8_t> bytes);
    FrameHandler handler();

    /// Drops sessions idle for longer than the timeout. Returns how many went.
    std::size_t evict_idle(Clock::time_point now);
    std::size_t session_count() const;

    const llm::Model& model() const noexcept { return model_; }
    const ldm::Pipeline& pipeline() const noexcept { return pipeline_; }

private:
    struct Slot {
        std::mutex mutex;
        std::unique_ptr<CloudSession> session;
        Clock::time_point last_seen;
    };

    std::unique_ptr<CloudSession> open_session(const wire::Frame& hello);
    void drop(std::uint64_t session_id);

    llm::Model model_;
    ldm::Pipeline pipeline_;
    std::chrono::duration<double> idle_timeout_;

    mutable std::mutex deploy_mutex_;
    std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<llm::Body>> bodies_;

    mutable std::mutex sessions_mutex_;
    std::map<std::uint64_t, std::shared_ptr<Slot>> sessions_;
};

/// Result of one generation on the local node.
struct Outcome {
    std::uint64_t session_id = 0;
    Experiment experiment;
    llm::PartitionPlan plan;
    std::vector<llm::TokenId> tokens;
    std::string text;
    Image image;
    TrafficReport report;
    CaptureLog capture;
    std::string error;  // empty on success
    bool cloud_unreachable = false;

    bool ok() const noexcept { return error.empty(); }
};

nlohmann::json to_json(const Outcome& o);

/// Local node: owns the head and tail sub-models (and, for local-only runs,
/// the full model), talks to a cloud node and exposes the JSON control API.
class LocalNode {
public:
    using TransportFactory = std::function<std::unique_ptr<Transport>()>;

    /// With `cloud` set the channel is simulated in-process; otherwise every
    /// session opens a TCP connection to settings.cloud_addr.
    LocalNode(Settings settings, std::shared_ptr<CloudNode> cloud = nullptr);
    ~LocalNode();

    Outcome generate(const Experiment& e);

    std::optional<TrafficReport> traffic(std::uint64_t session) const;
    std::optional<CaptureLog> capture(std::uint64_t session) const;
    std::optional<std::uint64_t> latest_session() const;
    nlohmann::json capture_json(std::uint64_t session) const;

    const Settings& settings() const noexcept { return settings_; }
    nlohmann::json config_json() const;

    /// HTTP control API. start() returns the bound port (bind "host:0" for an
    /// ephemeral one); serve() blocks.
    int start(const std::string& bind);
    void serve(const std::string& bind);
    void stop();

private:
    struct Record {
        Experiment experiment;
        std::shared_ptr<MeteredLink> live;  // set while the session runs
        TrafficReport report;
        CaptureLog capture;
    };

    const llm::Partition& partition_for(const llm::PartitionPlan& plan);
    std::unique_ptr<Transport> connect();
    void run_llm(Outcome& out, MeteredLink& link);
    void run_ldm(Outcome& out, MeteredLink& link);
    void run_local_only(Outcome& out);

    Settings settings_;
    std::shared_ptr<CloudNode> cloud_;
    llm::Model model_;
    ldm::Pipeline pipeline_;

    std::mutex partitions_mutex_;
    std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<llm::Partition>> partitions_;

    std::atomic<std::uint64_t> next_session_;
    mutable std::mutex records_mutex_;
    std::map<std::uint64_t, Record> records_;
    std::optional<std::uint64_t> latest_;

    struct Http;
    std::unique_ptr<Http> http_;
};

}  // namespace lsplit
