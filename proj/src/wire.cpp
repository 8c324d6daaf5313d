#include "wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include <nlohmann/json.hpp>

#include "error.hpp"

namespace guiq {

using nlohmann::json;

namespace {

const char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

bool write_all(int fd, const char* data, std::size_t n) {
    while (n > 0) {
        ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w <= 0) {
            return false;
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
    return true;
}

// false = clean EOF before any byte; throws on mid-frame failure handled by caller
bool read_exact(int fd, char* data, std::size_t n, bool* eof_at_start) {
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, data + got, n - got, 0);
        if (r == 0) {
            if (eof_at_start) *eof_at_start = (got == 0);
            return false;
        }
        if (r < 0) {
            if (eof_at_start) *eof_at_start = false;
            return false;
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

bool send_frame(int fd, std::string_view payload) {
    std::string frame = encode_frame(payload);
    return write_all(fd, frame.data(), frame.size());
}

// Returns false on EOF/error; payload too large throws.
bool recv_frame(int fd, std::string& payload, bool* eof_at_start = nullptr) {
    unsigned char header[4];
    if (!read_exact(fd, reinterpret_cast<char*>(header), 4, eof_at_start)) {
        return false;
    }
    std::uint32_t len = (std::uint32_t(header[0]) << 24) | (std::uint32_t(header[1]) << 16) |
                        (std::uint32_t(header[2]) << 8) | std::uint32_t(header[3]);
    if (len > kMaxFrameBytes) {
        throw Error(Errc::protocol, "frame exceeds the size limit");
    }
    payload.resize(len);
    if (len == 0) {
        return true;
    }
    bool dummy;
    return read_exact(fd, payload.data(), len, &dummy);
}

} // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                          static_cast<unsigned char>(bytes[i + 2]);
        out += kB64Chars[(v >> 18) & 63];
        out += kB64Chars[(v >> 12) & 63];
        out += kB64Chars[(v >> 6) & 63];
        out += kB64Chars[v & 63];
        i += 3;
    }
    std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out += kB64Chars[(v >> 18) & 63];
        out += kB64Chars[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += kB64Chars[(v >> 18) & 63];
        out += kB64Chars[(v >> 12) & 63];
        out += kB64Chars[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    std::string out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        int v = b64_value(c);
        if (v < 0) {
            throw Error(Errc::parse, "invalid base64 input");
        }
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out += static_cast<char>((acc >> bits) & 0xFF);
        }
    }
    return out;
}

std::string encode_frame(std::string_view payload) {
    if (payload.size() > kMaxFrameBytes) {
        throw Error(Errc::protocol, "frame exceeds the size limit");
    }
    std::string frame;
    frame.reserve(payload.size() + 4);
    std::uint32_t len = static_cast<std::uint32_t>(payload.size());
    frame += static_cast<char>((len >> 24) & 0xFF);
    frame += static_cast<char>((len >> 16) & 0xFF);
    frame += static_cast<char>((len >> 8) & 0xFF);
    frame += static_cast<char>(len & 0xFF);
    frame += payload;
    return frame;
}

SocketServer::SocketServer(Handler handler) : handler_(std::move(handler)) {}

SocketServer::~SocketServer() { stop(); }

void SocketServer::start(std::uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
        throw Error(Errc::io, "socket() failed");
    }
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(Errc::io, "bind() failed");
    }
    if (::listen(listen_fd_, 64) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(Errc::io, "listen() failed");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    stopping_ = false;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void SocketServer::stop() {
    if (listen_fd_ < 0 && !accept_thread_.joinable()) {
        return;
    }
    stopping_ = true;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (accept_thread_.joinable()) {
        accept_thread_.join();
    }
    std::vector<std::thread> threads;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        for (int fd : conn_fds_) {
            ::shutdown(fd, SHUT_RDWR);
        }
        threads.swap(conn_threads_);
    }
    for (std::thread& t : threads) {
        if (t.joinable()) {
            t.join();
        }
    }
}

void SocketServer::accept_loop() {
    while (!stopping_) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (stopping_) break;
            continue;
        }
        std::lock_guard<std::mutex> lock(mutex_);
        conn_fds_.push_back(fd);
        conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void SocketServer::serve_connection(int fd) {
    std::string payload;
    while (!stopping_) {
        bool eof_at_start = false;
        bool ok;
        try {
            ok = recv_frame(fd, payload, &eof_at_start);
        } catch (const Error&) {
            break; // oversized frame: drop the connection
        }
        if (!ok) {
            break;
        }
        json response;
        try {
            json request = json::parse(payload);
            response = handler_(request);
        } catch (const std::exception& e) {
            response = json{{"type", "error"},
                            {"cid", 0},
                            {"code", "malformed"},
                            {"message", e.what()}};
        }
        if (!send_frame(fd, response.dump())) {
            break;
        }
    }
    ::close(fd);
}

SocketClient::~SocketClient() { close(); }

void SocketClient::connect(const std::string& host, std::uint16_t port) {
    close();
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) {
        throw Error(Errc::io, "socket() failed");
    }
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        close();
        throw Error(Errc::io, "bad address: " + host);
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        close();
        throw Error(Errc::io, "connect() to " + host + ":" + std::to_string(port) + " failed");
    }
}

json SocketClient::request(const json& doc) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (fd_ < 0) {
        throw Error(Errc::io, "client is not connected");
    }
    if (!send_frame(fd_, doc.dump())) {
        throw Error(Errc::io, "send failed");
    }
    std::string payload;
    if (!recv_frame(fd_, payload)) {
        throw Error(Errc::io, "connection closed while waiting for a response");
    }
    return json::parse(payload);
}

void SocketClient::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

} // namespace guiq
