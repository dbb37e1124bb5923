#include "mqos/pep.hpp"

#include "http_internal.hpp"

#include <algorithm>

namespace mqos::pep {

std::vector<Mechanism> control(const PepPolicy& policy) {
    std::vector<Mechanism> chain;
    for (auto m : {Mechanism::Reject, Mechanism::Delay, Mechanism::Schedule}) {
        if (policy.enabled.contains(m)) chain.push_back(m);
    }
    return chain;
}

// --- Rejecter ---------------------------------------------------------------

std::string_view toString(RejectionMode m) noexcept {
    return m == RejectionMode::Deterministic ? "DETERMINISTIC" : "PROBABILISTIC";
}

RejectionMode parseRejectionMode(std::string_view s) {
    if (s == "DETERMINISTIC") return RejectionMode::Deterministic;
    if (s == "PROBABILISTIC") return RejectionMode::Probabilistic;
    throw InvalidPolicy("rejection_mode", "unknown rejection mode '" + std::string(s) + "'");
}

Rejecter::Rejecter(RejectionMode mode, std::uint64_t seed) : mode_(mode), rng_(seed) {}

bool Rejecter::reject(Priority p, int pct) {
    std::lock_guard lk(mu_);
    auto& c = counters_[p];
    c.seen++;
    bool out = false;
    if (mode_ == RejectionMode::Deterministic) {
        out = deterministicRejects(c.seen, pct);
    } else if (pct > 0) {
        out = std::bernoulli_distribution(pct / 100.0)(rng_);
    }
    if (out) c.rejected++;
    return out;
}

void Rejecter::reset() {
    std::lock_guard lk(mu_);
    counters_ = {};
}

Rejecter::Counters Rejecter::counters(Priority p) const {
    std::lock_guard lk(mu_);
    return counters_[p];
}

// --- Delayer ----------------------------------------------------------------

std::chrono::nanoseconds Delayer::hold(std::chrono::milliseconds d) {
    auto begin = std::chrono::steady_clock::now();
    std::unique_lock lk(mu_);
    if (holding_ >= capacity_) throw DelayQueueFull();
    holding_++;
    cv_.wait_until(lk, begin + d, [&] { return stopping_; });
    holding_--;
    return std::chrono::steady_clock::now() - begin;
}

std::size_t Delayer::holding() const {
    std::lock_guard lk(mu_);
    return holding_;
}

void Delayer::shutdown() {
    {
        std::lock_guard lk(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
}

// --- Scheduler --------------------------------------------------------------

void Scheduler::Slot::release() {
    if (owner_) std::exchange(owner_, nullptr)->releaseSlot();
}

Scheduler::Scheduler(std::size_t capacityPerQueue, std::size_t forwarderSlots)
    : queues_(capacityPerQueue), slots_(std::max<std::size_t>(forwarderSlots, 1)) {}

Scheduler::~Scheduler() { shutdown(); }

void Scheduler::configure(Discipline d, const PerPriority<int>& weights) {
    std::lock_guard lk(mu_);
    queues_.configure(d, weights);
}

void Scheduler::setSlots(std::size_t n) {
    std::lock_guard lk(mu_);
    slots_ = std::max<std::size_t>(n, 1);
    dispatchLocked();
}

Scheduler::Slot Scheduler::admit(Priority p) {
    auto w = std::make_shared<Waiter>();
    std::unique_lock lk(mu_);
    if (stopping_) throw Error("scheduler shut down");
    queues_.push(p, w);
    dispatchLocked();
    w->cv.wait(lk, [&] { return w->granted || w->cancelled; });
    if (w->cancelled) throw Error("scheduler shut down");
    return Slot(this);
}

void Scheduler::dispatchLocked() {
    while (inUse_ < slots_) {
        auto next = queues_.pop();
        if (!next) break;
        auto& [prio, waiter] = *next;
        inUse_++;
        dispatched_[prio]++;
        waiter->granted = true;
        waiter->cv.notify_one();
    }
}

void Scheduler::releaseSlot() {
    std::lock_guard lk(mu_);
    inUse_--;
    dispatchLocked();
}

std::size_t Scheduler::queued(Priority p) const {
    std::lock_guard lk(mu_);
    return queues_.size(p);
}

std::uint64_t Scheduler::dispatched(Priority p) const {
    std::lock_guard lk(mu_);
    return dispatched_[p];
}

std::size_t Scheduler::inUse() const {
    std::lock_guard lk(mu_);
    return inUse_;
}

std::size_t Scheduler::slots() const {
    std::lock_guard lk(mu_);
    return slots_;
}

void Scheduler::shutdown() {
    std::lock_guard lk(mu_);
    stopping_ = true;
    while (auto next = queues_.pop()) {
        next->second->cancelled = true;
        next->second->cv.notify_one();
    }
}

// --- PepServer --------------------------------------------------------------

namespace {

constexpr std::size_t kOverheadWindow = 20000;

ProxyResponse localReply(int status, std::string_view action) {
    ProxyResponse r;
    r.status = status;
    r.headers.emplace_back(std::string(headers::kPepAction), std::string(action));
    r.headers.emplace_back("Content-Type", "application/json");
    r.body = Json{{"error", std::string(action)}}.dump();
    return r;
}

} // namespace

PepServer::PepServer(PepConfig cfg)
    : cfg_(std::move(cfg)),
      policy_(std::make_shared<const PepPolicy>(validatePolicy(cfg_.policy))),
      upstream_(cfg_.upstream),
      rejecter_(cfg_.rejectionMode, cfg_.seed),
      delayer_(cfg_.delayCapacity),
      scheduler_(cfg_.queueCapacity, cfg_.forwarderSlots),
      http_(cfg_.threads) {
    scheduler_.configure(policy_->discipline, policy_->weights);
    auto& srv = http_.routes();

    srv.Put("/admin/pep/policy", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = detail::parseBody(req, res);
        if (!body) return;
        try {
            bool changed = setPolicy(decodePepPolicy(*body));
            Json j = policy();
            j["changed"] = changed;
            detail::replyJson(res, j);
        } catch (const Error& e) {
            detail::replyError(res, 400, e.what());
        }
    });
    srv.Get("/admin/pep/policy", [this](const httplib::Request&, httplib::Response& res) {
        detail::replyJson(res, policy());
    });
    srv.Get("/admin/pep/stats", [this](const httplib::Request&, httplib::Response& res) {
        detail::replyJson(res, statsJson());
    });
    srv.Put("/admin/pep/upstream", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = detail::parseBody(req, res);
        if (!body) return;
        try {
            setUpstream(Endpoint::parse(body->at("address").get<std::string>()));
            detail::replyJson(res, {{"address", upstream().str()}});
        } catch (const std::exception& e) {
            detail::replyError(res, 400, e.what());
        }
    });

    auto handler = [this](const httplib::Request& in, httplib::Response& res) {
        auto result = process(detail::fromHttplib(in));
        detail::relay(result.response, res);
    };
    const char* pattern = R"(/(?!admin/).*)";
    srv.Get(pattern, handler);
    srv.Post(pattern, handler);
    srv.Put(pattern, handler);
    srv.Delete(pattern, handler);
    srv.Patch(pattern, handler);
}

PepServer::~PepServer() { stop(); }

void PepServer::stop() {
    delayer_.shutdown();
    scheduler_.shutdown();
    http_.stop();
}

PepServer::Processed PepServer::process(TaggedRequest req) {
    auto arrival = monotonicNs();
    if (auto stamped = req.header(headers::kIngressNs)) {
        try {
            req.stampIngress(std::stoll(*stamped));
        } catch (const std::exception&) {
        }
    }
    req.stampIngress(arrival);

    std::shared_ptr<const PepPolicy> policy;
    Endpoint upstream;
    {
        std::lock_guard lk(mu_);
        policy = policy_;
        upstream = upstream_;
    }
    auto prio = effectivePriority(req);
    auto bump = [&](auto member) {
        std::lock_guard lk(mu_);
        (stats_[prio].*member)++;
    };
    bump(&PriorityStats::seen);

    std::int64_t mechanismWaitNs = 0;
    Scheduler::Slot slot;
    for (auto m : control(*policy)) {
        switch (m) {
        case Mechanism::Reject:
            if (rejecter_.reject(prio, policy->rejectionPct[prio])) {
                bump(&PriorityStats::rejected);
                return {Outcome::Rejected, localReply(503, "rejected")};
            }
            break;
        case Mechanism::Delay:
            if (policy->delayMs[prio] > 0) {
                try {
                    mechanismWaitNs += delayer_.hold(std::chrono::milliseconds(policy->delayMs[prio])).count();
                    bump(&PriorityStats::delayed);
                } catch (const DelayQueueFull&) {
                    bump(&PriorityStats::delayOverflow);
                    return {Outcome::DelayOverflow, localReply(503, "delay-overflow")};
                }
            }
            break;
        case Mechanism::Schedule: {
            auto queuedAt = monotonicNs();
            try {
                bump(&PriorityStats::enqueued);
                slot = scheduler_.admit(prio);
                bump(&PriorityStats::dispatched);
            } catch (const QueueFull&) {
                bump(&PriorityStats::queueOverflow);
                return {Outcome::QueueOverflow, localReply(503, "queue-overflow")};
            } catch (const Error&) {
                return {Outcome::ShuttingDown, localReply(503, "shutting-down")};
            }
            mechanismWaitNs += monotonicNs() - queuedAt;
            break;
        }
        }
    }

    auto overheadNs = std::max<std::int64_t>(0, monotonicNs() - *req.ingressNs() - mechanismWaitNs);
    recordOverhead(overheadNs);
    auto response = forward(upstream, req);
    slot.release();
    bump(&PriorityStats::forwarded);
    if (response.transportError) bump(&PriorityStats::upstreamErrors);
    response.headers.emplace_back(std::string(headers::kOverheadUs), std::to_string(overheadNs / 1000));
    return {Outcome::Forwarded, std::move(response)};
}

void PepServer::recordOverhead(std::int64_t ns) {
    std::lock_guard lk(mu_);
    if (overheadNs_.size() < kOverheadWindow) {
        overheadNs_.push_back(ns);
    } else {
        overheadNs_[overheadNext_] = ns;
        overheadNext_ = (overheadNext_ + 1) % kOverheadWindow;
    }
}

std::optional<double> PepServer::medianOverheadMs() const {
    std::vector<std::int64_t> v;
    {
        std::lock_guard lk(mu_);
        v = overheadNs_;
    }
    if (v.empty()) return std::nullopt;
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return static_cast<double>(*mid) / 1e6;
}

bool PepServer::setPolicy(const PepPolicy& policy) {
    auto validated = validatePolicy(policy);
    {
        std::lock_guard lk(mu_);
        if (*policy_ == validated) return false;
        policy_ = std::make_shared<const PepPolicy>(validated);
    }
    rejecter_.reset();
    scheduler_.configure(validated.discipline, validated.weights);
    return true;
}

PepPolicy PepServer::policy() const {
    std::lock_guard lk(mu_);
    return *policy_;
}

void PepServer::setUpstream(Endpoint ep) {
    std::lock_guard lk(mu_);
    upstream_ = std::move(ep);
}

Endpoint PepServer::upstream() const {
    std::lock_guard lk(mu_);
    return upstream_;
}

PriorityStats PepServer::stats(Priority p) const {
    std::lock_guard lk(mu_);
    return stats_[p];
}

Json PepServer::statsJson() const {
    Json per = Json::object();
    for (auto p : kPrioritiesByPrecedence) {
        auto s = stats(p);
        auto rc = rejecter_.counters(p);
        per[std::string(shortName(p))] = {
            {"seen", s.seen},
            {"rejected", s.rejected},
            {"delayed", s.delayed},
            {"delay_overflow", s.delayOverflow},
            {"enqueued", s.enqueued},
            {"queued", scheduler_.queued(p)},
            {"queue_overflow", s.queueOverflow},
            {"dispatched", s.dispatched},
            {"forwarded", s.forwarded},
            {"upstream_errors", s.upstreamErrors},
            {"window_seen", rc.seen},
            {"window_rejected", rc.rejected},
        };
    }
    auto med = medianOverheadMs();
    return Json{{"priorities", per},
                {"policy", policy()},
                {"rejection_mode",
                 std::string(toString(rejecter_.mode()))},
                {"forwarder_slots", scheduler_.slots()},
                {"forwarders_in_use", scheduler_.inUse()},
                {"delayed_now", delayer_.holding()},
                {"upstream", upstream().str()},
                {"median_overhead_ms", med ? Json(*med) : Json(nullptr)}};
}

} // namespace mqos::pep
