#include "mqos/gateway.hpp"

#include "support.hpp"

#include "test.hpp"

#include <thread>

using namespace mqos;
using namespace std::chrono_literals;

namespace {

double timedPost(const Endpoint& ep) {
    auto t0 = std::chrono::steady_clock::now();
    auto r = testing::post(ep, "/app/data");
    REQUIRE(r);
    CHECK(r->status == 201);
    return testing::msSince(t0);
}

} // namespace

TEST_SUITE("gateway") {

TEST_CASE("service time shapes the response time") {
    for (int service : {50, 100}) {
        gateway::GatewayConfig cfg;
        cfg.serviceTime = std::chrono::milliseconds(service);
        cfg.threads = 8;
        gateway::Gateway g(cfg);
        g.start();
        timedPost(g.endpoint());
        double ms = timedPost(g.endpoint());
        CHECK(ms >= service - 1);
        CHECK(ms < service + 40);
    }
}

TEST_CASE("one worker serves one request at a time") {
    gateway::GatewayConfig cfg;
    cfg.serviceTime = 100ms;
    cfg.threads = 8;
    gateway::Gateway g(cfg);
    g.start();
    auto t0 = std::chrono::steady_clock::now();
    std::thread a([&] { testing::post(g.endpoint(), "/a/data"); });
    std::thread b([&] { testing::post(g.endpoint(), "/b/data"); });
    a.join();
    b.join();
    CHECK(testing::msSince(t0) >= 199);
    CHECK(g.stats().peakBusy == 1);
    CHECK(g.stats().served == 2);
}

TEST_CASE("response body names the application") {
    gateway::GatewayConfig cfg;
    cfg.serviceTime = 1ms;
    cfg.threads = 4;
    gateway::Gateway g(cfg);
    g.start();
    auto r = testing::post(g.endpoint(), "/postop/data");
    REQUIRE(r);
    auto body = Json::parse(r->body);
    CHECK(body["application"] == "postop");
    CHECK(body["resource_id"] == "postop-1");
}

TEST_CASE("full accept queue turns requests away") {
    gateway::GatewayConfig cfg;
    cfg.serviceTime = 300ms;
    cfg.acceptQueueCapacity = 1;
    cfg.threads = 8;
    gateway::Gateway g(cfg);
    g.start();
    std::thread a([&] { testing::post(g.endpoint(), "/a/data"); });
    while (g.stats().busy < 1) std::this_thread::sleep_for(1ms);
    std::thread b([&] { testing::post(g.endpoint(), "/b/data"); });
    while (g.stats().waiting < 1) std::this_thread::sleep_for(1ms);
    auto r = testing::post(g.endpoint(), "/c/data");
    REQUIRE(r);
    CHECK(r->status == 503);
    CHECK(r->get_header_value("X-GW-Action") == "overflow");
    a.join();
    b.join();
    auto s = g.stats();
    CHECK(s.served == 2);
    CHECK(s.overflowed == 1);
}

TEST_CASE("growing the pool releases waiting requests") {
    gateway::WorkerPool pool(1, 10);
    auto first = pool.acquire();
    REQUIRE(first);
    std::atomic<int> got{0};
    std::vector<std::thread> ts;
    for (int i = 0; i < 3; ++i) {
        ts.emplace_back([&] {
            auto l = pool.acquire();
            if (l) got++;
            std::this_thread::sleep_for(50ms);
        });
    }
    while (pool.waiting() < 3) std::this_thread::sleep_for(1ms);
    pool.resize(4);
    for (auto& t : ts) t.join();
    CHECK(got.load() == 3);
    CHECK(pool.peakBusy() == 4);
    CHECK_THROWS_AS(pool.resize(0), InvalidPolicy);
}

TEST_CASE("config validation") {
    gateway::GatewayConfig c;
    c.serviceTime = 0ms;
    CHECK_THROWS_AS(gateway::validateConfig(c), InvalidPolicy);
    c = {};
    c.workers = 0;
    CHECK_THROWS_AS(gateway::validateConfig(c), InvalidPolicy);
    c = {};
    c.jitter = c.serviceTime;
    CHECK_THROWS_AS(gateway::validateConfig(c), InvalidPolicy);
}

}
