// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>

#include "lsplit/error.hpp"
#include "lsplit/wire.hpp"

namespace lsplit {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

bool write_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto n = ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        done += static_cast<std::size_t>(n);
    }
    return true;
}

enum class ReadStatus { ok, closed, failed };

ReadStatus read_exact(int fd, std::uint8_t* dst, std::size_t n) {
    std::size_t done = 0;
    while (done < n) {
        const auto got = ::recv(fd, dst + done, n - done, 0);
        if (got == 0) return ReadStatus::closed;
        if (got < 0) {
            if (errno == EINTR) continue;
            return ReadStatus::failed;
        }
        done += static_cast<std::size_t>(got);
    }
    return ReadStatus::ok;
}

/// Reads one frame worth of bytes using the header's length fields.
/// Returns an empty buffer on orderly close before a frame starts.
Bytes read_frame(int fd) {
    Bytes buf;
    std::size_t have = 0;
    for (;;) {
        const auto hint = wire::frame_size_hint(buf);
        if (hint.needed > kMaxFrameBytes) throw Error(Errc::channel, "frame of " + std::to_string(hint.needed) + " bytes exceeds limit");
        if (hint.complete && have == hint.needed) return buf;
        buf.resize(hint.needed);
        const auto status = read_exact(fd, buf.data() + have, hint.needed - have);
        if (status == ReadStatus::closed && have == 0) return {};
        if (status != ReadStatus::ok) throw Error(Errc::channel, "connection lost mid-frame");
        have = hint.needed;
        if (have >= 4 && !std::equal(buf.begin(), buf.begin() + 4, std::begin(wire::kMagic))) {
            throw Error(Errc::channel, "stream is not framed");
        }
    }
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_host_port(std::string_view addr) {
    std::string host = "127.0.0.1";
    std::string_view port_text = addr;
    if (const auto colon = addr.rfind(':'); colon != std::string_view::npos) {
        host = std::string(addr.substr(0, colon));
        port_text = addr.substr(colon + 1);
        if (host.empty()) host = "0.0.0.0";
    }
    unsigned port = 0;
    const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port > 65535) {
        throw Error(Errc::parameter, "bad address '" + std::string(addr) + "', expected host:port");
    }
    return {host, static_cast<std::uint16_t>(port)};
}

TcpTransport::TcpTransport(const std::string& addr) {
    const auto [host, port] = parse_host_port(addr);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
        throw Error(Errc::channel, "cannot resolve cloud address " + addr);
    }
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0) {
        ::freeaddrinfo(res);
        throw Error(Errc::channel, sys_error("socket"));
    }
    const int rc = ::connect(fd_, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) {
        const auto msg = sys_error("cannot connect to cloud at " + addr);
        ::close(fd_);
        fd_ = -1;
        throw Error(Errc::channel, msg);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpTransport::~TcpTransport() {
    if (fd_ >= 0) ::close(fd_);
}

void TcpTransport::send(std::span<const std::uint8_t> frame) {
    if (!write_all(fd_, frame)) throw Error(Errc::channel, sys_error("send to cloud failed"));
}

Bytes TcpTransport::receive() {
    Bytes b = read_frame(fd_);
    if (b.empty()) throw Error(Errc::channel, "cloud closed the connection");
    return b;
}

TcpServer::TcpServer(FrameHandler handler) : handler_(std::move(handler)) {}

TcpServer::~TcpServer() { stop(); }

std::uint16_t TcpServer::start(const std::string& bind) {
    const auto [host, port] = parse_host_port(bind);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(Errc::channel, sys_error("socket"));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) throw Error(Errc::parameter, "bind host must be an IPv4 address");
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 || ::listen(listen_fd_, 64) != 0) {
        const auto msg = sys_error("cannot bind " + bind);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(Errc::channel, msg);
    }
    socklen_t len = sizeof sa;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    return ntohs(sa.sin_port);
}

void TcpServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            break;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(mutex_);
        if (!running_) {
            ::close(fd);
            break;
        }
        clients_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void TcpServer::serve_connection(int fd) {
    try {
        for (;;) {
            Bytes frame = read_frame(fd);
            if (frame.empty()) break;
            for (const auto& reply : handler_(frame)) {
                if (!write_all(fd, reply)) throw Error(Errc::channel, "client went away");
            }
        }
    } catch (const Error& e) {
        // Unframed or oversized input: answer once, then drop the connection.
        const auto err = wire::encode_frame(wire::make_bytes_frame(wire::MsgType::error, 0, 0, e.what()));
        write_all(fd, err);
    }
    {
        std::lock_guard lock(mutex_);
        clients_.erase(std::remove(clients_.begin(), clients_.end(), fd), clients_.end());
    }
    ::close(fd);
}

void TcpServer::wait() {
    if (acceptor_.joinable()) acceptor_.join();
}

void TcpServer::stop() {
    if (!running_.exchange(false)) {
        if (acceptor_.joinable()) acceptor_.join();
        return;
    }
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
    ::close(listen_fd_);
    listen_fd_ = -1;
}

}  // namespace lsplit
