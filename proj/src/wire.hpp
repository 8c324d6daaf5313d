#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace guiq {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// 32-bit big-endian byte count followed by the UTF-8 JSON payload.
std::string encode_frame(std::string_view payload);

inline constexpr std::size_t kMaxFrameBytes = 64u * 1024u * 1024u;

/// Blocking request/response server over length-prefixed JSON frames.
/// One thread per connection; the handler must be thread-safe.
class SocketServer {
public:
    using Handler = std::function<nlohmann::json(const nlohmann::json&)>;

    explicit SocketServer(Handler handler);
    ~SocketServer();

    SocketServer(const SocketServer&) = delete;
    SocketServer& operator=(const SocketServer&) = delete;

    /// Binds 127.0.0.1:`port` (0 = ephemeral) and starts accepting.
    void start(std::uint16_t port = 0);
    void stop();
    std::uint16_t port() const { return port_; }

private:
    void accept_loop();
    void serve_connection(int fd);

    Handler handler_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::thread accept_thread_;
    std::mutex mutex_;
    std::vector<std::thread> conn_threads_;
    std::vector<int> conn_fds_;
    std::atomic<bool> stopping_{false};
};

/// Blocking client; request() frames one JSON document and waits for the
/// matching response frame. Safe for use from one thread at a time.
class SocketClient {
public:
    SocketClient() = default;
    ~SocketClient();

    SocketClient(const SocketClient&) = delete;
    SocketClient& operator=(const SocketClient&) = delete;

    void connect(const std::string& host, std::uint16_t port);
    bool connected() const { return fd_ >= 0; }
    nlohmann::json request(const nlohmann::json& doc);
    void close();

private:
    int fd_ = -1;
    std::mutex mutex_;
};

} // namespace guiq
