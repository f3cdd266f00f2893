// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/netsim.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "lsplit/error.hpp"

namespace lsplit {

const char* direction_name(Direction d) noexcept { return d == Direction::uplink ? "uplink" : "downlink"; }

double message_latency(const ChannelConfig& channel, std::size_t frame_bytes) {
    const double serialization =
        std::isinf(channel.bandwidth_bits_per_s) ? 0.0 : 8.0 * static_cast<double>(frame_bytes) / channel.bandwidth_bits_per_s;
    return channel.rtt_s / 2.0 + serialization;
}

double deliver(const ChannelConfig& channel, std::size_t frame_bytes, double t_send) {
    return t_send + message_latency(channel, frame_bytes);
}

std::uint64_t analytic_llm_traffic(std::uint64_t l_in, std::uint64_t l_out, std::uint64_t d, std::uint64_t bytes_per_elem,
                                   bool caching) {
    if (l_out == 0) return 0;
    const std::uint64_t row = d * bytes_per_elem;
    if (caching) return (l_in + l_out - 1) * row;
    // sum_{i=0}^{L_out-1} (L_in + i) = L_out * L_in + L_out (L_out - 1) / 2
    return (l_out * l_in + l_out * (l_out - 1) / 2) * row;
}

std::uint64_t DirectionTraffic::message_total() const noexcept {
    std::uint64_t n = 0;
    for (auto m : messages) n += m;
    return n;
}

double TrafficReport::throughput() const noexcept {
    const double t = total_latency_s();
    return t > 0.0 ? static_cast<double>(items) / t : 0.0;
}

namespace {

nlohmann::json direction_json(const DirectionTraffic& d) {
    nlohmann::json counts = nlohmann::json::object();
    for (std::size_t i = 0; i < d.messages.size(); ++i) {
        if (d.messages[i]) counts[wire::msg_type_name(static_cast<wire::MsgType>(i))] = d.messages[i];
    }
    return {{"payload_bytes", d.payload_bytes},
            {"overhead_bytes", d.overhead_bytes},
            {"total_bytes", d.total_bytes()},
            {"messages", d.message_total()},
            {"message_counts", counts}};
}

}  // namespace

nlohmann::json to_json(const TrafficReport& r) {
    return {{"uplink", direction_json(r.uplink)},
            {"downlink", direction_json(r.downlink)},
            {"total_bytes", r.total_bytes()},
            {"comm_latency_s", r.comm_latency_s},
            {"local_compute_s", r.local_compute_s},
            {"cloud_compute_s", r.cloud_compute_s},
            {"total_latency_s", r.total_latency_s()},
            {"items", r.items},
            {"throughput", r.throughput()}};
}

void meter_frame(TrafficReport& report, Direction dir, std::span<const std::uint8_t> frame_bytes) {
    auto& d = report.direction(dir);
    const auto decoded = wire::decode_frame(frame_bytes);
    if (!decoded) {
        d.overhead_bytes += frame_bytes.size();
        return;
    }
    const auto& f = decoded.frame();
    d.messages[static_cast<std::size_t>(f.type)] += 1;
    const bool data = wire::is_tensor_type(f.type) || f.type == wire::MsgType::text;
    const std::size_t payload = data ? f.payload.size() : 0;
    d.payload_bytes += payload;
    d.overhead_bytes += frame_bytes.size() - payload;
}

void CaptureLog::record(double timestamp_s, Direction dir, std::span<const std::uint8_t> bytes) {
    records_.push_back({timestamp_s, dir, Bytes(bytes.begin(), bytes.end())});
}

void tap_record(CaptureLog& capture, Direction dir, std::span<const std::uint8_t> bytes, double timestamp_s) {
    capture.record(timestamp_s, dir, bytes);
}

namespace {

void put_le(Bytes& out, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t& pos, int n) {
    if (pos + n > in.size()) throw Error(Errc::frame, "capture file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += n;
    return v;
}

}  // namespace

Bytes CaptureLog::serialize() const {
    Bytes out = {'L', 'S', 'P', 'C'};
    put_le(out, 1, 4);
    put_le(out, records_.size(), 8);
    for (const auto& r : records_) {
        put_le(out, std::bit_cast<std::uint64_t>(r.timestamp_s), 8);
        put_le(out, static_cast<std::uint8_t>(r.direction), 1);
        put_le(out, r.bytes.size(), 4);
        out.insert(out.end(), r.bytes.begin(), r.bytes.end());
    }
    return out;
}

CaptureLog CaptureLog::deserialize(std::span<const std::uint8_t> in) {
    if (in.size() < 16 || in[0] != 'L' || in[1] != 'S' || in[2] != 'P' || in[3] != 'C') {
        throw Error(Errc::frame, "not a capture file");
    }
    std::size_t pos = 4;
    if (get_le(in, pos, 4) != 1) throw Error(Errc::frame, "unsupported capture version");
    const auto count = get_le(in, pos, 8);
    CaptureLog log;
    for (std::uint64_t i = 0; i < count; ++i) {
        CaptureRecord r;
        r.timestamp_s = std::bit_cast<double>(get_le(in, pos, 8));
        const auto dir = get_le(in, pos, 1);
        if (dir > 1) throw Error(Errc::frame, "bad direction in capture file");
        r.direction = static_cast<Direction>(dir);
        const auto len = get_le(in, pos, 4);
        if (pos + len > in.size()) throw Error(Errc::frame, "capture file truncated");
        r.bytes.assign(in.begin() + pos, in.begin() + pos + len);
        pos += len;
        log.records_.push_back(std::move(r));
    }
    return log;
}

void CaptureLog::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::parameter, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CaptureLog CaptureLog::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::parameter, "cannot read " + path.string());
    const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

std::vector<LeakHit> detect_plaintext_leak(const CaptureLog& capture, std::span<const std::uint8_t> secret) {
    if (secret.size() < kMinLeakLength) throw Error(Errc::parameter, "leak secret must be at least 4 bytes");
    std::vector<LeakHit> hits;
    const auto m = secret.size();
    for (std::size_t rec = 0; rec < capture.size(); ++rec) {
        const auto& b = capture.records()[rec].bytes;
        const auto n = b.size();
        if (n < kMinLeakLength) continue;
        for (std::size_t p = 0; p + kMinLeakLength <= n; ++p) {
            for (std::size_t s = 0; s + kMinLeakLength <= m; ++s) {
                if (b[p] != secret[s]) continue;
                // only report maximal runs: skip if the run extends to the left
                if (p > 0 && s > 0 && b[p - 1] == secret[s - 1]) continue;
                std::size_t len = 0;
                while (p + len < n && s + len < m && b[p + len] == secret[s + len]) ++len;
                if (len >= kMinLeakLength) hits.push_back({rec, p, len, s});
            }
        }
    }
    return hits;
}

std::vector<LeakHit> detect_plaintext_leak(const CaptureLog& capture, std::string_view secret) {
    return detect_plaintext_leak(
        capture, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(secret.data()), secret.size()));
}

std::vector<std::string> hexdump_lines(std::span<const std::uint8_t> bytes) {
    std::vector<std::string> lines;
    char buf[16];
    for (std::size_t off = 0; off < bytes.size(); off += 16) {
        std::string line;
        std::snprintf(buf, sizeof buf, "%08zx ", off);
        line += buf;
        std::string ascii;
        for (std::size_t i = 0; i < 16; ++i) {
            if (i == 8) line += ' ';
            if (off + i < bytes.size()) {
                const auto c = bytes[off + i];
                std::snprintf(buf, sizeof buf, " %02x", c);
                line += buf;
                ascii += (c >= 0x20 && c < 0x7f) ? static_cast<char>(c) : '.';
            } else {
                line += "   ";
            }
        }
        line += "  |" + ascii + "|";
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string capture_hexdump(const CaptureLog& capture) {
    std::string out;
    char buf[128];
    for (std::size_t i = 0; i < capture.size(); ++i) {
        const auto& r = capture.records()[i];
        const auto decoded = wire::decode_frame(r.bytes);
        const char* type = decoded ? wire::msg_type_name(decoded.frame().type) : "?";
        std::snprintf(buf, sizeof buf, "# frame %zu  t=%.6fs  %s  %s  %zu bytes\n", i, r.timestamp_s,
                      direction_name(r.direction), type, r.bytes.size());
        out += buf;
        for (const auto& line : hexdump_lines(r.bytes)) {
            out += line;
            out += '\n';
        }
    }
    return out;
}

void LoopbackTransport::send(std::span<const std::uint8_t> frame) {
    for (auto& response : handler_(frame)) inbox_.push_back(std::move(response));
}

Bytes LoopbackTransport::receive() {
    if (inbox_.empty()) throw Error(Errc::channel, "no frame pending from remote");
    Bytes b = std::move(inbox_.front());
    inbox_.pop_front();
    return b;
}

MeteredLink::MeteredLink(Transport& transport, ChannelConfig channel)
    : transport_(transport), channel_(channel), start_(std::chrono::steady_clock::now()) {
    if (!(channel_.bandwidth_bits_per_s > 0.0)) throw Error(Errc::parameter, "bandwidth must be positive");
    if (channel_.rtt_s < 0.0) throw Error(Errc::parameter, "rtt must be non-negative");
}

double MeteredLink::virtual_now() const {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return wall + report_.comm_latency_s;
}

void MeteredLink::record(Direction dir, std::span<const std::uint8_t> bytes) {
    std::lock_guard lock(mutex_);
    const double t_send = virtual_now();
    const double t_arrive = deliver(channel_, bytes.size(), t_send);
    capture_.record(t_send, dir, bytes);
    meter_frame(report_, dir, bytes);
    report_.comm_latency_s += t_arrive - t_send;
}

void MeteredLink::send(const wire::Frame& frame) {
    const auto bytes = wire::encode_frame(frame);
    record(Direction::uplink, bytes);
    double waited = 0.0;
    {
        ScopedTimer timer(waited);
        transport_.send(bytes);
    }
    std::lock_guard lock(mutex_);
    report_.cloud_compute_s += waited;
}

wire::Frame MeteredLink::receive() {
    Bytes bytes;
    double waited = 0.0;
    {
        ScopedTimer timer(waited);
        bytes = transport_.receive();
    }
    {
        std::lock_guard lock(mutex_);
        report_.cloud_compute_s += waited;
    }
    record(Direction::downlink, bytes);
    auto decoded = wire::decode_frame(bytes);
    if (!decoded) {
        throw Error(Errc::frame, std::string("undecodable frame from remote: ") + wire::decode_error_name(decoded.error()));
    }
    return std::move(decoded.frame());
}

void MeteredLink::add_local_compute(double seconds) {
    std::lock_guard lock(mutex_);
    report_.local_compute_s += seconds;
}

void MeteredLink::set_items(std::uint64_t items) {
    std::lock_guard lock(mutex_);
    report_.items = items;
}

wire::Frame expect_frame(MeteredLink& link, wire::MsgType type, std::uint32_t step) {
    wire::Frame f = link.receive();
    if (f.type == wire::MsgType::error) throw Error(Errc::channel, "cloud reported: " + wire::payload_text(f));
    if (f.type != type || f.step_index != step) {
        throw Error(Errc::channel, std::string("expected ") + wire::msg_type_name(type) + " for step " +
                                       std::to_string(step) + ", got " + wire::msg_type_name(f.type) + " for step " +
                                       std::to_string(f.step_index));
    }
    return f;
}

TrafficReport MeteredLink::report() const {
    std::lock_guard lock(mutex_);
    return report_;
}

CaptureLog MeteredLink::capture() const {
    std::lock_guard lock(mutex_);
    return capture_;
}

}  // namespace lsplit
