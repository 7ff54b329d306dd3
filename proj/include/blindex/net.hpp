#pragma once

// Minimal TCP plumbing: RAII sockets, a listener, and newline framing.
// IPv4 only; good enough for a proxy, its backend, and test harnesses.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "blindex/error.hpp"

namespace blindex::net {

class Socket {
  public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.fd_;
            other.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    // Wakes up any thread blocked in a read on this socket.
    void shutdown_both() const {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void send_all(std::string_view data) const {
        size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                raise(errc::io_error, std::string("send failed: ") + std::strerror(errno));
            }
            off += static_cast<size_t>(n);
        }
    }

    // Returns 0 on orderly shutdown.
    size_t recv_some(char* buf, size_t cap) const {
        for (;;) {
            ssize_t n = ::recv(fd_, buf, cap, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                raise(errc::io_error, std::string("recv failed: ") + std::strerror(errno));
            }
            return static_cast<size_t>(n);
        }
    }

    void recv_exact(uint8_t* buf, size_t len) const {
        size_t off = 0;
        while (off < len) {
            size_t n = recv_some(reinterpret_cast<char*>(buf) + off, len - off);
            if (n == 0) raise(errc::io_error, "connection closed mid-message");
            off += n;
        }
    }

  private:
    int fd_ = -1;
};

struct HostPort {
    std::string host;
    uint16_t port = 0;
};

inline HostPort parse_hostport(std::string_view addr) {
    size_t colon = addr.rfind(':');
    if (colon == std::string_view::npos || colon + 1 >= addr.size())
        raise(errc::config_error, "address must look like host:port");
    HostPort hp;
    hp.host = std::string(addr.substr(0, colon));
    if (hp.host.empty()) hp.host = "127.0.0.1";
    unsigned long port = 0;
    for (char c : addr.substr(colon + 1)) {
        if (c < '0' || c > '9') raise(errc::config_error, "port must be numeric");
        port = port * 10 + static_cast<unsigned long>(c - '0');
        if (port > 65535) raise(errc::config_error, "port out of range");
    }
    hp.port = static_cast<uint16_t>(port);
    return hp;
}

inline sockaddr_in make_addr(const std::string& host, uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        raise(errc::config_error, "host must be an IPv4 address: " + host);
    return addr;
}

inline Socket connect_tcp(const std::string& host, uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) raise(errc::io_error, std::string("socket failed: ") + std::strerror(errno));
    Socket s(fd);
    sockaddr_in addr = make_addr(host, port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        raise(errc::io_error, "connect to " + host + ":" + std::to_string(port) +
                                  " failed: " + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return s;
}

inline Socket connect_tcp(std::string_view addr) {
    HostPort hp = parse_hostport(addr);
    return connect_tcp(hp.host, hp.port);
}

class Listener {
  public:
    Listener() = default;
    Listener(Listener&&) = default;
    Listener& operator=(Listener&&) = default;

    // `addr` is host:port; port 0 binds an ephemeral port (see port()).
    static Listener bind(std::string_view addr, int backlog = 64) {
        HostPort hp = parse_hostport(addr);
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) raise(errc::io_error, std::string("socket failed: ") + std::strerror(errno));
        Listener l;
        l.sock_ = Socket(fd);
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in sa = make_addr(hp.host, hp.port);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
            raise(errc::io_error, "bind to " + hp.host + ":" + std::to_string(hp.port) +
                                      " failed: " + std::strerror(errno));
        if (::listen(fd, backlog) != 0)
            raise(errc::io_error, std::string("listen failed: ") + std::strerror(errno));
        socklen_t len = sizeof(sa);
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
        l.port_ = ntohs(sa.sin_port);
        return l;
    }

    // Empty socket when the listener has been closed.
    Socket accept() {
        int fd = ::accept(sock_.fd(), nullptr, nullptr);
        if (fd < 0) return Socket();
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return Socket(fd);
    }

    uint16_t port() const { return port_; }
    bool valid() const { return sock_.valid(); }

    void close() {
        sock_.shutdown_both();
        sock_.close();
    }

  private:
    Socket sock_;
    uint16_t port_ = 0;
};

// Newline framing over a socket; keeps a rolling buffer between lines.
class LineReader {
  public:
    explicit LineReader(const Socket& sock) : sock_(&sock) {}

    // False on orderly EOF with nothing buffered.
    bool next_line(std::string& out) {
        for (;;) {
            size_t nl = buf_.find('\n');
            if (nl != std::string::npos) {
                out.assign(buf_, 0, nl);
                buf_.erase(0, nl + 1);
                if (!out.empty() && out.back() == '\r') out.pop_back();
                return true;
            }
            char chunk[4096];
            size_t n = sock_->recv_some(chunk, sizeof(chunk));
            if (n == 0) {
                if (buf_.empty()) return false;
                out = std::move(buf_);
                buf_.clear();
                return true;
            }
            buf_.append(chunk, n);
        }
    }

  private:
    const Socket* sock_;
    std::string buf_;
};

// Thread-per-connection acceptor. `stop()` closes the listener and every
// open connection, then joins.
class Server {
  public:
    using ConnHandler = std::function<void(const Socket&)>;

    Server(Listener listener, ConnHandler handler)
        : listener_(std::move(listener)), handler_(std::move(handler)) {}

    ~Server() { stop(); }

    void start() {
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    uint16_t port() const { return listener_.port(); }

    void stop() {
        bool expected = false;
        if (!stopping_.compare_exchange_strong(expected, true)) return;
        listener_.close();
        {
            std::lock_guard<std::mutex> lock(mu_);
            for (auto& [token, fd] : open_fds_) ::shutdown(fd, SHUT_RDWR);
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        std::vector<std::thread> workers;
        {
            std::lock_guard<std::mutex> lock(mu_);
            workers.swap(workers_);
        }
        for (auto& t : workers)
            if (t.joinable()) t.join();
    }

  private:
    void accept_loop() {
        for (;;) {
            Socket sock = listener_.accept();
            if (!sock.valid()) return; // listener closed
            std::lock_guard<std::mutex> lock(mu_);
            if (stopping_.load()) return;
            uint64_t token = next_token_++;
            open_fds_[token] = sock.fd();
            workers_.emplace_back(
                [this, token](Socket s) {
                    try {
                        handler_(s);
                    } catch (...) {
                        // connection handlers must not take the server down
                    }
                    std::lock_guard<std::mutex> lock2(mu_);
                    open_fds_.erase(token);
                },
                std::move(sock));
        }
    }

    Listener listener_;
    ConnHandler handler_;
    std::thread accept_thread_;
    std::mutex mu_;
    std::vector<std::thread> workers_;
    std::map<uint64_t, int> open_fds_;
    uint64_t next_token_ = 1;
    std::atomic<bool> stopping_{false};
};

} // namespace blindex::net
