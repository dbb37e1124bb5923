#include "http_internal.hpp"

#include <array>
#include <charconv>

namespace mqos {

namespace {

constexpr std::array<std::string_view, 11> kDroppedHeaders{
    "Connection",  "Keep-Alive",  "Transfer-Encoding", "Content-Length",
    "Host",        "REMOTE_ADDR", "REMOTE_PORT",       "LOCAL_ADDR",
    "LOCAL_PORT",  "Upgrade",     "Proxy-Connection"};

bool dropped(std::string_view name) {
    for (auto h : kDroppedHeaders) {
        if (iequals(name, h)) return true;
    }
    return false;
}

} // namespace

Endpoint Endpoint::parse(std::string_view s) {
    auto colon = s.rfind(':');
    if (colon == std::string_view::npos) throw Error("endpoint must be host:port, got '" + std::string(s) + "'");
    Endpoint ep;
    if (colon > 0) ep.host = std::string(s.substr(0, colon));
    auto portStr = s.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(portStr.data(), portStr.data() + portStr.size(), ep.port);
    if (ec != std::errc{} || ptr != portStr.data() + portStr.size() || ep.port < 0 || ep.port > 65535) {
        throw Error("bad port in endpoint '" + std::string(s) + "'");
    }
    return ep;
}

// --- HttpServer -------------------------------------------------------------

HttpServer::HttpServer(std::size_t threads) : server_(std::make_unique<httplib::Server>()) {
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server_->set_keep_alive_max_count(1000);
    server_->set_read_timeout(30);
    server_->set_write_timeout(30);
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::start(const std::string& host, int port) {
    if (thread_.joinable()) throw Error("server already started");
    host_ = host;
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
        if (port_ < 0) throw Error("cannot bind " + host);
    } else {
        if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
        port_ = port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void HttpServer::stop() {
    if (!thread_.joinable()) return;
    server_->stop();
    thread_.join();
}

bool HttpServer::running() const noexcept { return server_->is_running(); }

// --- forwarding -------------------------------------------------------------

std::optional<std::string> ProxyResponse::header(std::string_view name) const {
    for (const auto& [k, v] : headers) {
        if (iequals(k, name)) return v;
    }
    return std::nullopt;
}

ProxyResponse forward(const Endpoint& upstream, const TaggedRequest& req, const ForwardOptions& opts) {
    httplib::Client cli(upstream.host, upstream.port);
    cli.set_connection_timeout(opts.connectTimeout);
    cli.set_read_timeout(opts.readTimeout);
    cli.set_write_timeout(opts.readTimeout);

    httplib::Request out;
    out.method = req.method;
    out.path = req.target;
    for (const auto& [k, v] : req.headers()) out.headers.emplace(k, v);
    out.body = req.body;

    ProxyResponse resp;
    auto result = cli.send(out);
    if (!result) {
        resp.status = 502;
        resp.transportError = httplib::to_string(result.error());
        return resp;
    }
    resp.status = result->status;
    for (const auto& [k, v] : result->headers) resp.headers.emplace_back(k, v);
    resp.body = std::move(result->body);
    return resp;
}

JsonReply httpJson(const Endpoint& ep, const std::string& method, const std::string& path,
                   const nlohmann::json& body, std::chrono::milliseconds timeout) {
    httplib::Client cli(ep.host, ep.port);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);

    httplib::Request out;
    out.method = method;
    out.path = path;
    if (!body.is_null()) {
        out.body = body.dump();
        out.headers.emplace("Content-Type", "application/json");
    }
    auto result = cli.send(out);
    if (!result) {
        throw UpstreamUnreachable(method + " " + ep.str() + path + ": " +
                                  httplib::to_string(result.error()));
    }
    JsonReply reply;
    reply.status = result->status;
    reply.body = nlohmann::json::parse(result->body, nullptr, false);
    if (reply.body.is_discarded()) reply.body = nullptr;
    return reply;
}

// --- httplib conversions ----------------------------------------------------

namespace detail {

TaggedRequest fromHttplib(const httplib::Request& req) {
    HeaderList headers;
    std::string host;
    for (const auto& [k, v] : req.headers) {
        if (iequals(k, "Host")) host = v;
        if (dropped(k)) continue;
        headers.emplace_back(k, v);
    }
    auto target = req.target.empty() ? req.path : req.target;
    auto destination = host.empty() ? req.local_addr + ":" + std::to_string(req.local_port) : host;
    return TaggedRequest::fromWire(req.method, std::move(target), std::move(headers), req.body,
                                   req.remote_addr, std::move(destination));
}

void relay(const ProxyResponse& upstream, httplib::Response& res) {
    res.status = upstream.status;
    for (const auto& [k, v] : upstream.headers) {
        if (dropped(k)) continue;
        res.headers.emplace(k, v);
    }
    res.body = upstream.body;
    if (upstream.transportError) {
        res.set_header("X-Proxy-Error", *upstream.transportError);
    }
}

void replyJson(httplib::Response& res, const nlohmann::json& body, int status) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void replyError(httplib::Response& res, int status, const std::string& message) {
    replyJson(res, nlohmann::json{{"error", message}}, status);
}

std::optional<nlohmann::json> parseBody(const httplib::Request& req, httplib::Response& res) {
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) {
        replyError(res, 400, "body is not valid JSON");
        return std::nullopt;
    }
    return j;
}

} // namespace detail

} // namespace mqos
