#include "mqos/cluster.hpp"
#include "mqos/gateway.hpp"

#include "support.hpp"

#include "test.hpp"

#include <random>

using namespace mqos;
using namespace mqos::cluster;

namespace {

std::vector<Instance> instances(std::vector<int> weights) {
    std::vector<Instance> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.push_back({{"127.0.0.1", 9000 + static_cast<int>(i)}, weights[i]});
    }
    return out;
}

} // namespace

TEST_SUITE("cluster") {

TEST_CASE("round robin gives k picks each over k*n") {
    for (int n : {1, 2, 3, 5}) {
        InstancePool pool(instances(std::vector<int>(static_cast<std::size_t>(n), 1)), Strategy::RoundRobin);
        std::vector<int> count(static_cast<std::size_t>(n));
        for (int i = 0; i < 7 * n; ++i) {
            auto p = pool.pick();
            count[p.index]++;
            pool.release(p.index, true);
        }
        for (int c : count) CHECK(c == 7);
    }
}

TEST_CASE("weighted round robin matches weights over every window") {
    for (auto w : {std::vector<int>{2, 1}, std::vector<int>{5, 1, 1}, std::vector<int>{3, 4, 2, 1}}) {
        InstancePool pool(instances(w), Strategy::WeightedRoundRobin);
        int total = std::accumulate(w.begin(), w.end(), 0);
        for (int window = 0; window < 4; ++window) {
            std::vector<int> count(w.size());
            for (int i = 0; i < total; ++i) {
                auto p = pool.pick();
                count[p.index]++;
                pool.release(p.index, true);
            }
            CHECK(count == w);
        }
    }
}

TEST_CASE("smooth WRR interleaves") {
    SmoothWrr s;
    std::vector<int> w{5, 1, 1};
    std::vector<bool> all(3, true);
    std::vector<std::size_t> seq;
    for (int i = 0; i < 7; ++i) seq.push_back(s.next(w, all));
    CHECK(seq == std::vector<std::size_t>{0, 0, 1, 0, 2, 0, 0});
}

TEST_CASE("least loaded property on random gauges") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> size(1, 8), load(0, 6), coin(0, 4);
    for (int c = 0; c < 20000; ++c) {
        auto n = static_cast<std::size_t>(size(rng));
        std::vector<std::int64_t> inFlight(n);
        std::vector<bool> healthy(n);
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            inFlight[i] = load(rng);
            healthy[i] = coin(rng) != 0;
            any = any || healthy[i];
        }
        if (!any) {
            CHECK_THROWS_AS(leastLoaded(inFlight, healthy), NoHealthyInstance);
            continue;
        }
        auto k = leastLoaded(inFlight, healthy);
        REQUIRE(healthy[k]);
        for (std::size_t i = 0; i < n; ++i) {
            if (!healthy[i]) continue;
            REQUIRE(inFlight[k] <= inFlight[i]);
            if (i < k) REQUIRE(inFlight[i] > inFlight[k]);
        }
    }
}

TEST_CASE("load oriented pool tracks in-flight") {
    InstancePool pool(instances({1, 1, 1}), Strategy::LoadOriented);
    auto a = pool.pick();
    auto b = pool.pick();
    auto c = pool.pick();
    CHECK(a.index == 0);
    CHECK(b.index == 1);
    CHECK(c.index == 2);
    pool.release(b.index, true);
    CHECK(pool.pick().index == 1);
}

TEST_CASE("unhealthy instances are skipped") {
    InstancePool pool(instances({1, 1}), Strategy::RoundRobin, std::chrono::milliseconds(60000));
    auto p = pool.pick();
    pool.release(p.index, false);
    for (int i = 0; i < 4; ++i) {
        auto q = pool.pick();
        CHECK(q.index != p.index);
        pool.release(q.index, true);
    }
    pool.setHealthy(1 - p.index, false);
    CHECK_THROWS_AS(pool.pick(), NoHealthyInstance);
    pool.setHealthy(p.index, true);
    CHECK(pool.pick().index == p.index);
}

TEST_CASE("balancer spreads requests across gateways") {
    gateway::GatewayConfig gc;
    gc.serviceTime = std::chrono::milliseconds(5);
    gc.threads = 16;
    gateway::Gateway g1(gc), g2(gc);
    g1.start();
    g2.start();
    BalancerConfig bc;
    bc.instances = {{g1.endpoint(), 2}, {g2.endpoint(), 1}};
    bc.strategy = Strategy::WeightedRoundRobin;
    bc.threads = 16;
    BalancerServer lb(bc);
    lb.start();
    for (int i = 0; i < 9; ++i) {
        auto r = testing::post(lb.endpoint(), "/app/data");
        REQUIRE(r);
        CHECK(r->status == 201);
    }
    CHECK(g1.stats().served == 6);
    CHECK(g2.stats().served == 3);

    auto rr = httpJson(lb.endpoint(), "PUT", "/admin/lb/pool",
                       {{"strategy", "ROUND_ROBIN"},
                        {"instances", {{{"address", g1.endpoint().str()}}, {{"address", g2.endpoint().str()}}}}});
    CHECK(rr.status == 200);
    CHECK(lb.pool().strategy() == Strategy::RoundRobin);
    auto stats = httpJson(lb.endpoint(), "GET", "/admin/lb/stats");
    CHECK(stats.body["strategy"] == "ROUND_ROBIN");

    g2.stop();
    for (int i = 0; i < 4; ++i) testing::post(lb.endpoint(), "/app/data");
    // The dead instance fails once, then its cooldown keeps it out.
    CHECK(g1.stats().served >= 9);
}

TEST_CASE("vertical resize through the gateway admin endpoint") {
    gateway::GatewayConfig gc;
    gc.threads = 8;
    gateway::Gateway g(gc);
    g.start();
    resizeWorkers(g.endpoint(), 4);
    CHECK(g.stats().workers == 4);
    CHECK_THROWS_AS(resizeWorkers(g.endpoint(), 0), InvalidPolicy);
    CHECK(g.stats().workers == 4);
    CHECK_THROWS_AS(resizeWorkers({"127.0.0.1", 1}, 2), GatewayUnreachable);
}

}
