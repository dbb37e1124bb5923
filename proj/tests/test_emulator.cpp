#include "mqos/emulator.hpp"
#include "mqos/gateway.hpp"

#include "support.hpp"

#include "test.hpp"

#include <thread>

using namespace mqos;
using namespace mqos::emulator;

namespace {

InjectorSpec spec(double rate, ArrivalModel m = ArrivalModel::Periodic) {
    InjectorSpec s;
    s.profile.name = "inj";
    s.profile.rate = rate;
    s.profile.arrival = m;
    return s;
}

} // namespace

TEST_SUITE("emulator") {

TEST_CASE("periodic inter-arrival is 1/rate") {
    auto s = spec(6);
    s.durationS = 10;
    auto t = arrivalSchedule(s);
    REQUIRE(t.size() == 60);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] - t[i - 1] == doctest::Approx(166.6667).epsilon(1e-6));
    auto two = spec(2);
    two.totalRequests = 5;
    CHECK(arrivalSchedule(two) == std::vector<double>{0, 500, 1000, 1500, 2000});
}

TEST_CASE("phase shifts the whole schedule") {
    auto s = spec(2);
    s.totalRequests = 3;
    s.phaseMs = 50;
    CHECK(arrivalSchedule(s) == std::vector<double>{50, 550, 1050});
}

TEST_CASE("stochastic arrivals are seeded") {
    auto s = spec(2, ArrivalModel::Stochastic);
    s.totalRequests = 20000;
    s.seed = 9;
    auto a = arrivalSchedule(s);
    CHECK(a == arrivalSchedule(s));
    s.seed = 10;
    CHECK(a != arrivalSchedule(s));
    double meanGap = (a.back() - a.front()) / static_cast<double>(a.size() - 1);
    CHECK(meanGap == doctest::Approx(500).epsilon(0.03));
    // Exponential gaps: standard deviation equals the mean.
    double ss = 0;
    for (std::size_t i = 1; i < a.size(); ++i) ss += (a[i] - a[i - 1] - meanGap) * (a[i] - a[i - 1] - meanGap);
    CHECK(std::sqrt(ss / static_cast<double>(a.size() - 2)) == doctest::Approx(500).epsilon(0.05));
}

TEST_CASE("burst of 10 every 5 s over 20 s is 40 requests") {
    auto s = spec(2, ArrivalModel::Burst);
    s.profile.burstSize = 10;
    s.profile.burstPeriodS = 5;
    s.durationS = 20;
    auto t = arrivalSchedule(s);
    CHECK(t.size() == 40);
    CHECK(std::count(t.begin(), t.end(), 15000.0) == 10);
}

TEST_CASE("exactly one bound") {
    auto s = spec(1);
    CHECK_THROWS_AS(validateSpec(s), InvalidPolicy);
    s.totalRequests = 1;
    s.durationS = 1;
    CHECK_THROWS_AS(validateSpec(s), InvalidPolicy);
    s.durationS.reset();
    CHECK(validateSpec(s).sourceHeader == "inj");
}

TEST_CASE("response classification") {
    using metrics::Outcome;
    CHECK(classifyResponse(201, {}) == Outcome::Served);
    CHECK(classifyResponse(503, {{"X-PEP-Action", "rejected"}}) == Outcome::Rejected);
    CHECK(classifyResponse(503, {{"x-pep-action", "queue-overflow"}}) == Outcome::Overflowed);
    CHECK(classifyResponse(503, {{"X-PEP-Action", "delay-overflow"}}) == Outcome::Overflowed);
    CHECK(classifyResponse(503, {{"X-GW-Action", "overflow"}}) == Outcome::Overflowed);
    CHECK(classifyResponse(502, {}) == Outcome::Failed);
    CHECK(classifyResponse(503, {{"X-PEP-Action", "shutting-down"}}) == Outcome::Failed);
}

TEST_CASE("scenario run records every request once") {
    gateway::GatewayConfig gc;
    gc.serviceTime = std::chrono::milliseconds(5);
    gc.threads = 32;
    gateway::Gateway g(gc);
    g.start();

    auto a = spec(50);
    a.profile.name = "A";
    a.profile.priorityHint = Priority::High;
    a.target = g.endpoint();
    a.totalRequests = 25;
    auto b = spec(20, ArrivalModel::Burst);
    b.profile.name = "B";
    b.profile.burstSize = 5;
    b.profile.burstPeriodS = 0.2;
    b.target = g.endpoint();
    b.durationS = 0.5;

    metrics::MetricsRecorder rec;
    std::atomic<int> forwarded{0};
    rec.setSampleSink([&](const metrics::RttObservation& o) {
        CHECK(o.priority == Priority::High);
        forwarded++;
    });
    ScenarioRun run({a, b}, rec);
    run.wait();
    auto ds = rec.dataset();
    CHECK(ds.sent.at("A") == 25);
    CHECK(ds.sent.at("B") == 15);
    CHECK(ds.records.size() == 40);
    CHECK(forwarded.load() == 25);
    CHECK_FALSE(ds.truncated);
    std::map<std::string, std::set<std::uint64_t>> idx;
    for (const auto& r : ds.records) {
        CHECK(r.outcome == metrics::Outcome::Served);
        CHECK(r.rttMs.has_value());
        CHECK(*r.rttMs >= 4.0);
        idx[r.injector].insert(r.requestIndex);
    }
    CHECK(idx["A"].size() == 25);
    CHECK(*idx["A"].rbegin() == 24);
    CHECK(g.stats().served == 40);
}

TEST_CASE("empty scenario completes immediately") {
    metrics::MetricsRecorder rec;
    auto t0 = std::chrono::steady_clock::now();
    ScenarioRun run({}, rec);
    run.wait();
    CHECK(testing::msSince(t0) < 100);
    CHECK(rec.dataset().records.empty());
}

TEST_CASE("abort leaves a truncated but balanced dataset") {
    gateway::GatewayConfig gc;
    gc.serviceTime = std::chrono::milliseconds(20);
    gc.threads = 16;
    gateway::Gateway g(gc);
    g.start();
    auto s = spec(20);
    s.target = g.endpoint();
    s.durationS = 30;
    metrics::MetricsRecorder rec;
    ScenarioRun run({s}, rec);
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    run.abort();
    auto ds = rec.dataset();
    CHECK(ds.truncated);
    CHECK(ds.sent.at("inj") == ds.records.size());
    CHECK(ds.records.size() < 600);
    CHECK(ds.records.size() >= 3);
}

TEST_CASE("unreachable target fails at startup") {
    auto s = spec(1);
    s.target = {"127.0.0.1", 1};
    s.totalRequests = 1;
    metrics::MetricsRecorder rec;
    CHECK_THROWS_AS(ScenarioRun({s}, rec), StartupFailed);
}

TEST_CASE("a target that dies mid-run yields FAILED records") {
    auto g = std::make_unique<gateway::Gateway>(gateway::GatewayConfig{std::chrono::milliseconds(1), {}, 1, 500, 1, 8});
    g->start();
    auto s = spec(20);
    s.target = g->endpoint();
    s.totalRequests = 10;
    metrics::MetricsRecorder rec;
    ScenarioRun run({s}, rec);
    std::this_thread::sleep_for(std::chrono::milliseconds(120));
    g.reset();
    run.wait();
    auto sum = metrics::summarize(rec.dataset());
    const auto& i = sum.injectors.at("inj");
    CHECK(i.closed());
    CHECK(i.failed > 0);
    CHECK(i.served > 0);
}

}
