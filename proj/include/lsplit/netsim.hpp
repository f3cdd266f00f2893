// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsplit/wire.hpp"

namespace lsplit {

enum class Direction : std::uint8_t { uplink = 0, downlink = 1 };
const char* direction_name(Direction d) noexcept;

struct ChannelConfig {
    double bandwidth_bits_per_s = 1e9;  // 1000 Mbit/s
    double rtt_s = 0.0;
};

/// Arrival time of a `frame_bytes`-long frame sent at `t_send`:
/// t_send + rtt/2 + 8 * frame_bytes / bandwidth.
double deliver(const ChannelConfig& channel, std::size_t frame_bytes, double t_send);

/// One-way cost of a single message under the channel model.
double message_latency(const ChannelConfig& channel, std::size_t frame_bytes);

/// Payload bytes per direction for one split LLM generation. Without caching
/// step i carries (L_in + i) rows; with caching step 0 carries L_in rows and
/// every later step a single row.
std::uint64_t analytic_llm_traffic(std::uint64_t l_in, std::uint64_t l_out, std::uint64_t d, std::uint64_t bytes_per_elem,
                                   bool caching);

struct DirectionTraffic {
    // Payload = payload field of data frames (tensor frames and TEXT).
    // Overhead = frame headers, quantization blocks and control frames.
    std::uint64_t payload_bytes = 0;
    std::uint64_t overhead_bytes = 0;
    std::array<std::uint64_t, wire::kMsgTypeCount> messages{};

    std::uint64_t total_bytes() const noexcept { return payload_bytes + overhead_bytes; }
    std::uint64_t message_total() const noexcept;
    std::uint64_t count(wire::MsgType t) const noexcept { return messages[static_cast<std::size_t>(t)]; }
};

struct TrafficReport {
    DirectionTraffic uplink;
    DirectionTraffic downlink;
    double comm_latency_s = 0.0;   // modeled
    double local_compute_s = 0.0;  // wall clock
    double cloud_compute_s = 0.0;  // wall clock spent waiting on the remote side
    std::uint64_t items = 0;       // tokens or images produced

    std::uint64_t total_bytes() const noexcept { return uplink.total_bytes() + downlink.total_bytes(); }
    double total_latency_s() const noexcept { return comm_latency_s + local_compute_s + cloud_compute_s; }
    double throughput() const noexcept;

    DirectionTraffic& direction(Direction d) noexcept { return d == Direction::uplink ? uplink : downlink; }
    const DirectionTraffic& direction(Direction d) const noexcept { return d == Direction::uplink ? uplink : downlink; }
};

nlohmann::json to_json(const TrafficReport& r);

/// Adds one encoded frame to the per-direction counters.
void meter_frame(TrafficReport& report, Direction dir, std::span<const std::uint8_t> frame_bytes);

// --- eavesdropper tap ---------------------------------------------------

struct CaptureRecord {
    double timestamp_s = 0.0;
    Direction direction = Direction::uplink;
    Bytes bytes;
};

/// Append-only, byte-faithful copy of everything that crossed the channel.
class CaptureLog {
public:
    void record(double timestamp_s, Direction dir, std::span<const std::uint8_t> bytes);
    const std::vector<CaptureRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    // "LSPC" u32 version, u64 count, then per record: f64 timestamp, u8 direction, u32 length, bytes.
    Bytes serialize() const;
    static CaptureLog deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static CaptureLog load(const std::filesystem::path& path);

private:
    std::vector<CaptureRecord> records_;
};

void tap_record(CaptureLog& capture, Direction dir, std::span<const std::uint8_t> bytes, double timestamp_s = 0.0);

struct LeakHit {
    std::size_t record = 0;         // index into the capture
    std::size_t offset = 0;         // byte offset within the captured frame
    std::size_t length = 0;         // maximal match length (>= 4)
    std::size_t secret_offset = 0;  // where the match starts in the secret

    bool operator==(const LeakHit&) const = default;
};

inline constexpr std::size_t kMinLeakLength = 4;

/// Every maximal run of >= 4 bytes copied contiguously from `secret` into any
/// captured frame. Throws Error(Errc::parameter) for secrets shorter than 4 bytes.
std::vector<LeakHit> detect_plaintext_leak(const CaptureLog& capture, std::span<const std::uint8_t> secret);
std::vector<LeakHit> detect_plaintext_leak(const CaptureLog& capture, std::string_view secret);

/// 16 bytes per row: offset, hex columns, printable-ASCII gutter.
std::vector<std::string> hexdump_lines(std::span<const std::uint8_t> bytes);
std::string capture_hexdump(const CaptureLog& capture);

// --- links ------------------------------------------------------------------

/// Ordered, reliable frame transport as seen from the local node.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(std::span<const std::uint8_t> frame) = 0;
    virtual Bytes receive() = 0;
};

using FrameHandler = std::function<std::vector<Bytes>(std::span<const std::uint8_t>)>;

/// In-process transport: every sent frame is handed to `handler` synchronously
/// and its responses are queued for receive().
class LoopbackTransport final : public Transport {
public:
    explicit LoopbackTransport(FrameHandler handler) : handler_(std::move(handler)) {}
    void send(std::span<const std::uint8_t> frame) override;
    Bytes receive() override;

private:
    FrameHandler handler_;
    std::deque<Bytes> inbox_;
};

/// Channel wrapper used by the local node: meters bytes, applies the latency
/// model, feeds the eavesdropper tap and tracks where time is spent.
/// Counters may be read from other threads while a session runs.
class MeteredLink {
public:
    MeteredLink(Transport& transport, ChannelConfig channel);

    void send(const wire::Frame& frame);
    wire::Frame receive();

    void add_local_compute(double seconds);
    void set_items(std::uint64_t items);

    TrafficReport report() const;
    CaptureLog capture() const;
    const ChannelConfig& channel() const noexcept { return channel_; }

private:
    double virtual_now() const;
    void record(Direction dir, std::span<const std::uint8_t> bytes);

    Transport& transport_;
    ChannelConfig channel_;
    std::chrono::steady_clock::time_point start_;
    mutable std::mutex mutex_;
    TrafficReport report_;
    CaptureLog capture_;
};

/// Receives the next frame and checks it is `type` for `step`. An ERROR frame
/// or anything unexpected throws Error(Errc::channel).
wire::Frame expect_frame(MeteredLink& link, wire::MsgType type, std::uint32_t step);

/// Measures wall time of a scope and adds it to a counter.
class ScopedTimer {
public:
    explicit ScopedTimer(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
    ~ScopedTimer() { sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }
    ScopedTimer(const ScopedTimer&) = delete;
    ScopedTimer& operator=(const ScopedTimer&) = delete;

private:
    double& sink_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace lsplit
