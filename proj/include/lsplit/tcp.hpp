// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "lsplit/netsim.hpp"

namespace lsplit {

/// Frames larger than this are refused on both ends of a TCP connection.
inline constexpr std::size_t kMaxFrameBytes = 256u << 20;

/// "host:port"; a bare port means 127.0.0.1.
std::pair<std::string, std::uint16_t> parse_host_port(std::string_view addr);

/// Client side of a frame stream. Throws Error(Errc::channel) on connection problems.
class TcpTransport final : public Transport {
public:
    explicit TcpTransport(const std::string& addr);
    ~TcpTransport() override;
    TcpTransport(const TcpTransport&) = delete;
    TcpTransport& operator=(const TcpTransport&) = delete;

    void send(std::span<const std::uint8_t> frame) override;
    Bytes receive() override;

private:
    int fd_ = -1;
};

/// Accepts connections and answers each received frame with `handler`.
/// One thread per connection; frames on a connection are handled in order.
class TcpServer {
public:
    explicit TcpServer(FrameHandler handler);
    ~TcpServer();
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    /// Binds and starts accepting in the background. Returns the bound port.
    std::uint16_t start(const std::string& bind);
    /// Blocks until stop() is called from elsewhere.
    void wait();
    void stop();

private:
    void accept_loop();
    void serve_connection(int fd);

    FrameHandler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex mutex_;
    std::vector<int> clients_;
    std::vector<std::thread> workers_;
};

}  // namespace lsplit
