#pragma once

#include "mqos/http.hpp"
#include "mqos/model_json.hpp"

#include <httplib.h>

#include <chrono>
#include <mutex>
#include <vector>

namespace testing {

/// Upstream that answers every POST with what it received.
class EchoServer {
public:
    struct Seen {
        std::string path;
        std::string body;
        mqos::HeaderList headers;
    };

    EchoServer() : http_(16) {
        http_.routes().Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
            Seen s{req.path, req.body, {}};
            for (const auto& [k, v] : req.headers) s.headers.emplace_back(k, v);
            {
                std::lock_guard lk(mu_);
                seen_.push_back(s);
            }
            res.status = 200;
            res.set_content(req.body, "application/json");
        });
        http_.start();
    }

    mqos::Endpoint endpoint() const { return http_.endpoint(); }
    std::vector<Seen> seen() const {
        std::lock_guard lk(mu_);
        return seen_;
    }

private:
    mutable std::mutex mu_;
    std::vector<Seen> seen_;
    mqos::HttpServer http_;
};

inline httplib::Result post(const mqos::Endpoint& ep, const std::string& path, const httplib::Headers& h = {},
                            const std::string& body = "{}") {
    httplib::Client c(ep.host, ep.port);
    c.set_read_timeout(std::chrono::seconds(30));
    return c.Post(path, h, body, "application/json");
}

inline double msSince(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace testing
