#pragma once

#include "mqos/model.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

namespace httplib {
class Server;
} // namespace httplib

namespace mqos {

/// CLOCK_MONOTONIC in ns; comparable across processes on one host.
inline std::int64_t monotonicNs() noexcept {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
    /// "host:port" or ":port".
    static Endpoint parse(std::string_view s);
    friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

class UpstreamUnreachable : public Error {
public:
    using Error::Error;
};

/// Owns an httplib server running on a background thread. Declare it as the
/// last member of a component so it stops before the state its handlers use
/// is destroyed.
class HttpServer {
public:
    explicit HttpServer(std::size_t threads = 128);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    httplib::Server& routes() noexcept { return *server_; }

    /// Binds (port 0 picks an ephemeral port) and serves until stop().
    void start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();
    bool running() const noexcept;

    Endpoint endpoint() const { return {host_, port_}; }

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::string host_;
    int port_ = 0;
};

struct ProxyResponse {
    int status = 502;
    HeaderList headers;
    std::string body;
    /// Set when no upstream response was received.
    std::optional<std::string> transportError;

    std::optional<std::string> header(std::string_view name) const;
};

struct ForwardOptions {
    std::chrono::milliseconds connectTimeout{2000};
    std::chrono::milliseconds readTimeout{60000};
};

/// Sends the request to upstream. A transport failure is returned as a 502
/// with transportError set; this function does not throw.
ProxyResponse forward(const Endpoint& upstream, const TaggedRequest& req,
                      const ForwardOptions& opts = {});

/// Small JSON client used for admin endpoints. Throws UpstreamUnreachable on
/// transport failure; returns status and parsed body (null if not JSON).
struct JsonReply {
    int status = 0;
    nlohmann::json body;
};

JsonReply httpJson(const Endpoint& ep, const std::string& method, const std::string& path,
                   const nlohmann::json& body = nullptr,
                   std::chrono::milliseconds timeout = std::chrono::milliseconds{5000});

} // namespace mqos
