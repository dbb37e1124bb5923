#include "mqos/gateway.hpp"
#include "mqos/pep.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include "test.hpp"

#include <atomic>
#include <thread>

using namespace mqos;
using namespace std::chrono_literals;

TEST_SUITE("pep") {

TEST_CASE("controller order is fixed") {
    PepPolicy p;
    p.enabled = {Mechanism::Schedule, Mechanism::Reject, Mechanism::Delay};
    CHECK(pep::control(p) == std::vector<Mechanism>{Mechanism::Reject, Mechanism::Delay, Mechanism::Schedule});
    p.enabled = {Mechanism::Schedule};
    CHECK(pep::control(p) == std::vector<Mechanism>{Mechanism::Schedule});
    CHECK(pep::control(PepPolicy{}).empty());
}

TEST_CASE("deterministic rejection at 30%") {
    // 30% rejects requests 4, 7 and 10 of every ten.
    std::vector<int> rejected;
    for (int k = 1; k <= 10; ++k) {
        if (pep::deterministicRejects(static_cast<std::uint64_t>(k), 30)) rejected.push_back(k);
    }
    CHECK(rejected == std::vector<int>{4, 7, 10});
}

TEST_CASE("deterministic rejection agrees with the accumulator oracle") {
    for (int pct = 0; pct <= 100; ++pct) {
        auto want = oracle::rejectionPattern(1000, pct);
        pep::Rejecter r;
        int count = 0;
        for (int k = 0; k < 1000; ++k) {
            bool got = r.reject(Priority::Medium, pct);
            REQUIRE(got == want[static_cast<std::size_t>(k)]);
            count += got;
        }
        CHECK(count == 1000 * pct / 100);
        CHECK(r.counters(Priority::Medium).rejected == static_cast<std::uint64_t>(count));
    }
}

TEST_CASE("rejecter windows") {
    pep::Rejecter r;
    for (int i = 0; i < 3; ++i) r.reject(Priority::Low, 50);
    CHECK(r.counters(Priority::Low).seen == 3);
    CHECK(r.counters(Priority::Low).rejected == 1);
    CHECK(r.counters(Priority::Medium).seen == 0);
    r.reset();
    CHECK(r.counters(Priority::Low).seen == 0);
    CHECK_FALSE(r.reject(Priority::Low, 50));
    CHECK(r.reject(Priority::Low, 50));

    pep::Rejecter prob(pep::RejectionMode::Probabilistic, 99);
    int n = 0;
    for (int i = 0; i < 10000; ++i) n += prob.reject(Priority::Low, 80);
    CHECK(std::abs(n - 8000) <= 300);
    pep::Rejecter again(pep::RejectionMode::Probabilistic, 99);
    int m = 0;
    for (int i = 0; i < 10000; ++i) m += again.reject(Priority::Low, 80);
    CHECK(m == n);
}

TEST_CASE("delayer holds run concurrently") {
    pep::Delayer d(100);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> ts;
    for (int i = 0; i < 10; ++i) ts.emplace_back([&] { d.hold(100ms); });
    for (auto& t : ts) t.join();
    double ms = testing::msSince(t0);
    CHECK(ms >= 99);
    CHECK(ms < 400);
}

TEST_CASE("delayer capacity") {
    pep::Delayer d(2);
    std::thread a([&] { d.hold(300ms); });
    std::thread b([&] { d.hold(300ms); });
    while (d.holding() < 2) std::this_thread::sleep_for(1ms);
    CHECK_THROWS_AS(d.hold(10ms), pep::DelayQueueFull);
    a.join();
    b.join();
    CHECK(d.holding() == 0);
    CHECK(d.hold(0ms).count() >= 0);
}

TEST_CASE("WFQ dispatch order matches the exact oracle") {
    for (auto [wh, wm, wl] : {std::tuple{4, 2, 1}, std::tuple{1, 1, 1}, std::tuple{3, 5, 7}, std::tuple{10, 1, 1}}) {
        auto trace = oracle::saturatedTrace(3000, 11);
        pep::PriorityQueues<int> q(100000);
        q.configure(Discipline::Wfq, PerPriority<int>::of(wh, wm, wl));
        std::vector<Priority> got;
        for (const auto& op : trace) {
            if (op.push) {
                q.push(op.p, 0);
            } else if (auto x = q.pop()) {
                got.push_back(x->first);
            }
        }
        CHECK(got == oracle::wfqDispatches(trace, wh, wm, wl));
    }
}

TEST_CASE("WFQ with idle classes and sparse arrivals") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> coin(0, 5);
    std::vector<oracle::Op> trace;
    for (int i = 0; i < 5000; ++i) {
        int c = coin(rng);
        if (c < 3) {
            trace.push_back({true, static_cast<Priority>(c)});
        } else {
            trace.push_back({false, Priority::Low});
        }
    }
    pep::PriorityQueues<int> q(100000);
    q.configure(Discipline::Wfq, PerPriority<int>::of(4, 2, 1));
    std::vector<Priority> got;
    for (const auto& op : trace) {
        if (op.push) {
            q.push(op.p, 0);
        } else if (auto x = q.pop()) {
            got.push_back(x->first);
        }
    }
    CHECK(got == oracle::wfqDispatches(trace, 4, 2, 1));
}

TEST_CASE("priority-first never serves a lower class ahead of a waiting higher one") {
    auto trace = oracle::saturatedTrace(2000, 3, 2);
    pep::PriorityQueues<int> q(100000);
    for (const auto& op : trace) {
        if (op.push) {
            q.push(op.p, 0);
            continue;
        }
        std::optional<Priority> best;
        for (auto p : kPrioritiesByPrecedence) {
            if (q.size(p) > 0) {
                best = p;
                break;
            }
        }
        auto x = q.pop();
        REQUIRE(x.has_value() == best.has_value());
        if (x) CHECK(x->first == *best);
    }
}

TEST_CASE("queues are bounded and FIFO within a class") {
    pep::PriorityQueues<int> q(3);
    for (int i = 0; i < 3; ++i) q.push(Priority::Low, i);
    CHECK_THROWS_AS(q.push(Priority::Low, 9), pep::QueueFull);
    q.push(Priority::High, 7);
    CHECK(q.pop()->second == 7);
    for (int i = 0; i < 3; ++i) CHECK(q.pop()->second == i);
    CHECK_FALSE(q.pop());
}

TEST_CASE("weight change keeps queued order consistent") {
    pep::PriorityQueues<int> q(1000);
    q.configure(Discipline::Wfq, PerPriority<int>::of(1, 1, 1));
    for (int i = 0; i < 10; ++i) {
        q.push(Priority::High, i);
        q.push(Priority::Low, 100 + i);
    }
    q.configure(Discipline::Wfq, PerPriority<int>::of(4, 2, 1));
    for (int i = 10; i < 20; ++i) q.push(Priority::High, i);
    int high = -1, low = 99;
    while (auto x = q.pop()) {
        if (x->first == Priority::High) {
            CHECK(x->second > high);
            high = x->second;
        } else {
            CHECK(x->second > low);
            low = x->second;
        }
    }
    CHECK(high == 19);
    CHECK(low == 109);
}

TEST_CASE("one forwarder slot serializes dispatch") {
    pep::Scheduler s(100, 1);
    std::atomic<int> inside{0}, peak{0};
    std::vector<std::thread> ts;
    for (int i = 0; i < 8; ++i) {
        ts.emplace_back([&, i] {
            auto slot = s.admit(static_cast<Priority>(i % 3));
            int now = ++inside;
            int p = peak.load();
            while (now > p && !peak.compare_exchange_weak(p, now)) {}
            std::this_thread::sleep_for(10ms);
            --inside;
        });
    }
    for (auto& t : ts) t.join();
    CHECK(peak.load() == 1);
    CHECK(s.dispatched(Priority::High) + s.dispatched(Priority::Medium) + s.dispatched(Priority::Low) == 8);
    CHECK(s.inUse() == 0);
}

TEST_CASE("scheduler serves waiting HIGH first when a slot frees") {
    pep::Scheduler s(100, 1);
    s.configure(Discipline::PriorityFirst, PerPriority<int>::of(1, 1, 1));
    auto first = s.admit(Priority::Low);
    std::mutex m;
    std::vector<Priority> order;
    std::vector<std::thread> ts;
    for (auto p : {Priority::Low, Priority::Medium, Priority::High}) {
        ts.emplace_back([&, p] {
            auto slot = s.admit(p);
            std::lock_guard lk(m);
            order.push_back(p);
        });
        while (s.queued(p) == 0) std::this_thread::sleep_for(1ms);
    }
    first.release();
    for (auto& t : ts) t.join();
    CHECK(order == std::vector<Priority>{Priority::High, Priority::Medium, Priority::Low});
}

TEST_CASE("PEP server end to end") {
    testing::EchoServer up;
    pep::PepConfig cfg;
    cfg.upstream = up.endpoint();
    cfg.threads = 16;
    pep::PepServer server(cfg);
    server.start();

    PepPolicy reject;
    reject.enabled = {Mechanism::Reject};
    reject.rejectionPct = PerPriority<int>::of(0, 40, 100);
    CHECK(server.setPolicy(reject));
    CHECK_FALSE(server.setPolicy(reject));

    auto low = testing::post(server.endpoint(), "/food/data", {{"TOS_HTTP", "PRIORITY_LOW"}});
    REQUIRE(low);
    CHECK(low->status == 503);
    CHECK(low->get_header_value("X-PEP-Action") == "rejected");

    auto unmarked = testing::post(server.endpoint(), "/x/data");
    REQUIRE(unmarked);
    CHECK(unmarked->get_header_value("X-PEP-Action") == "rejected");

    auto high = testing::post(server.endpoint(), "/postop/data", {{"TOS_HTTP", "PRIORITY_HIGH"}}, R"({"v":1})");
    REQUIRE(high);
    CHECK(high->status == 200);
    CHECK(high->body == R"({"v":1})");
    CHECK(high->has_header("X-QoS-Overhead-Us"));

    for (int i = 0; i < 5; ++i) testing::post(server.endpoint(), "/loc/data", {{"TOS_HTTP", "PRIORITY_MEDIUM"}});
    CHECK(server.stats(Priority::Medium).seen == 5);
    CHECK(server.stats(Priority::Medium).rejected == 2);
    CHECK(server.stats(Priority::Low).rejected == 2);
    CHECK(server.medianOverheadMs().has_value());

    SUBCASE("admin endpoints") {
        Json wfq = Json::parse(R"({"enabled_mechanisms": ["SCHEDULE"],
            "scheduling": {"discipline": "WFQ", "weights": {"HIGH": 4, "MEDIUM": 2, "LOW": 1}}})");
        auto r = httpJson(server.endpoint(), "PUT", "/admin/pep/policy", wfq);
        CHECK(r.status == 200);
        auto stats = httpJson(server.endpoint(), "GET", "/admin/pep/stats");
        CHECK(stats.body["policy"]["scheduling"]["discipline"] == "WFQ");
        CHECK(stats.body["policy"]["scheduling"]["weights"]["HIGH"] == 4);
        auto bad = httpJson(server.endpoint(), "PUT", "/admin/pep/policy", Json::parse(R"({"rejection": {"LOW": 150}})"));
        CHECK(bad.status == 400);
        CHECK(server.policy().discipline == Discipline::Wfq);
    }
}

TEST_CASE("PEP reports an unreachable upstream as 502") {
    pep::PepConfig cfg;
    cfg.upstream = {"127.0.0.1", 1};
    cfg.threads = 4;
    pep::PepServer server(cfg);
    server.start();
    auto r = testing::post(server.endpoint(), "/x/data", {{"TOS_HTTP", "PRIORITY_HIGH"}});
    REQUIRE(r);
    CHECK(r->status == 502);
    CHECK(server.stats(Priority::High).upstreamErrors == 1);
}

TEST_CASE("delay mechanism adds the configured hold") {
    testing::EchoServer up;
    pep::PepConfig cfg;
    cfg.upstream = up.endpoint();
    cfg.threads = 8;
    PepPolicy p;
    p.enabled = {Mechanism::Delay};
    p.delayMs = PerPriority<int>::of(0, 0, 150);
    cfg.policy = p;
    pep::PepServer server(cfg);
    server.start();
    auto t0 = std::chrono::steady_clock::now();
    testing::post(server.endpoint(), "/x/data", {{"TOS_HTTP", "PRIORITY_LOW"}});
    CHECK(testing::msSince(t0) >= 149);
    t0 = std::chrono::steady_clock::now();
    testing::post(server.endpoint(), "/x/data", {{"TOS_HTTP", "PRIORITY_HIGH"}});
    CHECK(testing::msSince(t0) < 100);
    // Delay is a mechanism wait, so it is not counted as overhead.
    CHECK(*server.medianOverheadMs() < 50);
}

}
