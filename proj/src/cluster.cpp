#include "mqos/cluster.hpp"

#include "http_internal.hpp"

#include <algorithm>
#include <numeric>

namespace mqos::cluster {

std::string_view toString(Strategy s) noexcept {
    switch (s) {
    case Strategy::RoundRobin: return "ROUND_ROBIN";
    case Strategy::WeightedRoundRobin: return "WEIGHTED_ROUND_ROBIN";
    case Strategy::LoadOriented: return "LOAD_ORIENTED";
    }
    return "ROUND_ROBIN";
}

Strategy parseStrategy(std::string_view s) {
    for (auto st : {Strategy::RoundRobin, Strategy::WeightedRoundRobin, Strategy::LoadOriented}) {
        if (s == toString(st)) return st;
    }
    throw InvalidPolicy("strategy", "unknown strategy '" + std::string(s) + "'");
}

// --- selection primitives ---------------------------------------------------

std::size_t SmoothWrr::next(std::span<const int> weights, const std::vector<bool>& eligible) {
    if (credit_.size() != weights.size()) credit_.assign(weights.size(), 0);
    std::int64_t total = 0;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!eligible[i]) continue;
        credit_[i] += weights[i];
        total += weights[i];
        if (!best || credit_[i] > credit_[*best]) best = i;
    }
    if (!best) throw NoHealthyInstance();
    credit_[*best] -= total;
    return *best;
}

std::size_t leastLoaded(std::span<const std::int64_t> inFlight, const std::vector<bool>& healthy) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < inFlight.size(); ++i) {
        if (!healthy[i]) continue;
        if (!best || inFlight[i] < inFlight[*best]) best = i;
    }
    if (!best) throw NoHealthyInstance();
    return *best;
}

// --- InstancePool -----------------------------------------------------------

InstancePool::InstancePool(std::vector<Instance> instances, Strategy strategy,
                           std::chrono::milliseconds cooldown)
    : strategy_(strategy), cooldown_(cooldown) {
    reconfigure(std::move(instances), strategy);
}

void InstancePool::reconfigure(std::vector<Instance> instances, Strategy strategy) {
    if (instances.empty()) throw InvalidPolicy("instances", "pool needs at least one instance");
    for (const auto& i : instances) {
        if (i.weight < 1) throw InvalidPolicy("weights", "instance weight must be >= 1");
    }
    std::lock_guard lk(mu_);
    std::vector<Slot> slots;
    for (auto& inst : instances) {
        Slot s;
        // Keep gauges for addresses that stay in the pool.
        for (const auto& old : slots_) {
            if (old.instance.address == inst.address) {
                s = old;
                break;
            }
        }
        s.instance = std::move(inst);
        slots.push_back(std::move(s));
    }
    slots_ = std::move(slots);
    strategy_ = strategy;
    cursor_ = 0;
    wrr_.reset();
    lastEligible_.clear();
}

std::vector<bool> InstancePool::eligibleLocked() {
    auto now = std::chrono::steady_clock::now();
    std::vector<bool> eligible(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        auto& s = slots_[i];
        if (!s.healthy && now >= s.retryAt) s.healthy = true; // cooldown over: try again
        eligible[i] = s.healthy;
    }
    return eligible;
}

InstancePool::Pick InstancePool::pick() {
    std::lock_guard lk(mu_);
    auto eligible = eligibleLocked();
    if (eligible != lastEligible_) {
        wrr_.reset();
        lastEligible_ = eligible;
    }
    std::size_t chosen = 0;
    switch (strategy_) {
    case Strategy::RoundRobin: {
        bool found = false;
        for (std::size_t step = 0; step < slots_.size(); ++step) {
            auto i = (cursor_ + step) % slots_.size();
            if (eligible[i]) {
                chosen = i;
                found = true;
                break;
            }
        }
        if (!found) throw NoHealthyInstance();
        cursor_ = (chosen + 1) % slots_.size();
        break;
    }
    case Strategy::WeightedRoundRobin: {
        std::vector<int> weights;
        for (const auto& s : slots_) weights.push_back(s.instance.weight);
        chosen = wrr_.next(weights, eligible);
        break;
    }
    case Strategy::LoadOriented: {
        std::vector<std::int64_t> loads;
        for (const auto& s : slots_) loads.push_back(s.inFlight);
        chosen = leastLoaded(loads, eligible);
        break;
    }
    }
    auto& s = slots_[chosen];
    s.inFlight++;
    s.picks++;
    return {chosen, s.instance.address};
}

void InstancePool::release(std::size_t index, bool success) {
    std::lock_guard lk(mu_);
    if (index >= slots_.size()) return;
    auto& s = slots_[index];
    if (s.inFlight > 0) s.inFlight--;
    if (!success) {
        s.failures++;
        s.healthy = false;
        s.retryAt = std::chrono::steady_clock::now() + cooldown_;
    }
}

void InstancePool::setHealthy(std::size_t index, bool healthy) {
    std::lock_guard lk(mu_);
    auto& s = slots_.at(index);
    s.healthy = healthy;
    s.retryAt = healthy ? std::chrono::steady_clock::time_point{}
                        : std::chrono::steady_clock::time_point::max();
}

Strategy InstancePool::strategy() const {
    std::lock_guard lk(mu_);
    return strategy_;
}

std::vector<InstanceStats> InstancePool::stats() const {
    std::lock_guard lk(mu_);
    std::vector<InstanceStats> out;
    for (const auto& s : slots_) {
        out.push_back({s.instance.address, s.instance.weight, s.inFlight, s.picks, s.failures, s.healthy});
    }
    return out;
}

// --- BalancerServer ---------------------------------------------------------

namespace {

std::vector<Instance> instancesFromJson(const Json& j) {
    std::vector<Instance> out;
    for (const auto& e : j) {
        out.push_back({Endpoint::parse(e.at("address").get<std::string>()), e.value("weight", 1)});
    }
    return out;
}

} // namespace

BalancerServer::BalancerServer(BalancerConfig cfg)
    : pool_(std::move(cfg.instances), cfg.strategy, cfg.cooldown), http_(cfg.threads) {
    auto& srv = http_.routes();
    srv.Put("/admin/lb/pool", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = detail::parseBody(req, res);
        if (!body) return;
        try {
            auto strategy = parseStrategy(body->value("strategy", std::string(toString(pool_.strategy()))));
            pool_.reconfigure(instancesFromJson(body->at("instances")), strategy);
            detail::replyJson(res, statsJson());
        } catch (const std::exception& e) {
            detail::replyError(res, 400, e.what());
        }
    });
    srv.Get("/admin/lb/stats", [this](const httplib::Request&, httplib::Response& res) {
        detail::replyJson(res, statsJson());
    });

    auto handler = [this](const httplib::Request& in, httplib::Response& res) {
        InstancePool::Pick p;
        try {
            p = pool_.pick();
        } catch (const NoHealthyInstance&) {
            detail::replyError(res, 503, "no healthy instance");
            res.set_header("X-LB-Action", "no-healthy-instance");
            return;
        }
        auto upstream = forward(p.address, detail::fromHttplib(in));
        pool_.release(p.index, !upstream.transportError);
        detail::relay(upstream, res);
    };
    const char* pattern = R"(/(?!admin/).*)";
    srv.Get(pattern, handler);
    srv.Post(pattern, handler);
    srv.Put(pattern, handler);
    srv.Delete(pattern, handler);
    srv.Patch(pattern, handler);
}

Json BalancerServer::statsJson() const {
    Json inst = Json::array();
    for (const auto& s : pool_.stats()) {
        inst.push_back({{"address", s.address.str()},
                        {"weight", s.weight},
                        {"in_flight", s.inFlight},
                        {"picks", s.picks},
                        {"failures", s.failures},
                        {"healthy", s.healthy}});
    }
    return Json{{"strategy", std::string(toString(pool_.strategy()))}, {"instances", inst}};
}

// --- vertical scaling -------------------------------------------------------

void resizeWorkers(const Endpoint& gatewayAdmin, int newSize) {
    if (newSize < 1) throw InvalidPolicy("workers", "worker pool size must be >= 1");
    JsonReply reply;
    try {
        reply = httpJson(gatewayAdmin, "PUT", "/admin/gw/workers", Json{{"workers", newSize}});
    } catch (const UpstreamUnreachable& e) {
        throw GatewayUnreachable(e.what());
    }
    if (reply.status != 200) {
        throw GatewayUnreachable("gateway refused resize: HTTP " + std::to_string(reply.status));
    }
}

} // namespace mqos::cluster
