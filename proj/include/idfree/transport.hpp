// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "idfree/errors.hpp"
#include "idfree/wire.hpp"

namespace idfree {

/// Collects upload sessions as raw line-protocol payloads. Both transports
/// funnel through this type, so the bytes the cloud sees are identical
/// whichever path carried them. Appends are serialized; no session metadata
/// beyond the payload itself is kept.
class UploadCollector {
 public:
  void submit_payload(std::string payload) {
    std::lock_guard lock(mutex_);
    payloads_.push_back(std::move(payload));
  }

  void submit_session(std::span<const AnonymousRecord> records) {
    submit_payload(session_payload({records.begin(), records.end()}));
  }

  std::vector<std::string> payloads() const {
    std::lock_guard lock(mutex_);
    return payloads_;
  }

  /// All sessions parsed back into per-source record batches.
  std::vector<std::vector<AnonymousRecord>> sessions() const {
    std::lock_guard lock(mutex_);
    std::vector<std::vector<AnonymousRecord>> out;
    out.reserve(payloads_.size());
    for (const auto& p : payloads_) out.push_back(parse_session_payload(p));
    return out;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> payloads_;
};

namespace detail {

inline void write_all(int fd, const char* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t n = ::send(fd, data + sent, len - sent, 0);
    if (n <= 0) throw ConfigError("socket write failed");
    sent += static_cast<std::size_t>(n);
  }
}

}  // namespace detail

/// Minimal TCP record sink: one session per connection, newline-delimited
/// records, no framing and no metadata. Sessions may interleave; each
/// connection is drained on its own thread into the shared collector.
class RecordSocketServer {
 public:
  RecordSocketServer(const std::string& host, int port,
                     UploadCollector& collector)
      : collector_(collector) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ConfigError("cannot create server socket");
    int enable = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &enable, sizeof(enable));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(listen_fd_);
      throw ConfigError("invalid transport address: " + host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) <
        0) {
      ::close(listen_fd_);
      throw ConfigError("cannot bind transport socket");
    }
    if (::listen(listen_fd_, 64) < 0) {
      ::close(listen_fd_);
      throw ConfigError("cannot listen on transport socket");
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  ~RecordSocketServer() { stop(); }

  int port() const { return port_; }

  /// Accepts exactly `expected_sessions` connections, then stops listening.
  void start(int expected_sessions) {
    accept_thread_ = std::thread([this, expected_sessions] {
      std::vector<std::thread> sessions;
      for (int i = 0; i < expected_sessions; ++i) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) break;
        sessions.emplace_back([this, fd] {
          std::string payload;
          char buf[4096];
          for (;;) {
            const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
            if (n <= 0) break;
            payload.append(buf, static_cast<std::size_t>(n));
          }
          ::close(fd);
          collector_.submit_payload(std::move(payload));
        });
      }
      for (auto& t : sessions) t.join();
    });
  }

  void wait() {
    if (accept_thread_.joinable()) accept_thread_.join();
  }

  void stop() {
    if (listen_fd_ >= 0) {
      ::shutdown(listen_fd_, SHUT_RDWR);
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
    wait();
  }

 private:
  UploadCollector& collector_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::thread accept_thread_;
};

/// Device side of the socket transport: connect, stream the session, close.
inline void send_session_over_socket(const std::string& host, int port,
                                     std::span<const AnonymousRecord> records) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ConfigError("cannot create client socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw ConfigError("invalid transport address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(fd);
    throw ConfigError("cannot connect to transport socket");
  }
  const std::string payload =
      session_payload({records.begin(), records.end()});
  try {
    detail::write_all(fd, payload.data(), payload.size());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

}  // namespace idfree
