#include "mqos/gateway.hpp"

#include "http_internal.hpp"

#include <algorithm>
#include <thread>

namespace mqos::gateway {

// --- WorkerPool -------------------------------------------------------------

void WorkerPool::Lease::release() {
    if (pool_) std::exchange(pool_, nullptr)->releaseOne();
}

WorkerPool::WorkerPool(int workers, std::size_t acceptCapacity)
    : workers_(std::max(workers, 1)), capacity_(acceptCapacity) {}

std::optional<WorkerPool::Lease> WorkerPool::acquire() {
    std::unique_lock lk(mu_);
    if (stopping_) return std::nullopt;
    if (queue_.empty() && busy_ < workers_) {
        busy_++;
        peakBusy_ = std::max(peakBusy_, busy_);
        return Lease(this);
    }
    if (queue_.size() >= capacity_) return std::nullopt;
    auto ticket = nextTicket_++;
    queue_.push_back(ticket);
    cv_.wait(lk, [&] { return stopping_ || (queue_.front() == ticket && busy_ < workers_); });
    if (stopping_) {
        std::erase(queue_, ticket);
        return std::nullopt;
    }
    queue_.pop_front();
    busy_++;
    peakBusy_ = std::max(peakBusy_, busy_);
    lk.unlock();
    // The next ticket may also be eligible (e.g. after growing the pool).
    cv_.notify_all();
    return Lease(this);
}

void WorkerPool::releaseOne() {
    {
        std::lock_guard lk(mu_);
        busy_--;
    }
    cv_.notify_all();
}

void WorkerPool::resize(int workers) {
    if (workers < 1) throw InvalidPolicy("workers", "worker pool size must be >= 1");
    {
        std::lock_guard lk(mu_);
        workers_ = workers;
    }
    cv_.notify_all();
}

void WorkerPool::shutdown() {
    {
        std::lock_guard lk(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
}

int WorkerPool::workers() const {
    std::lock_guard lk(mu_);
    return workers_;
}

int WorkerPool::busy() const {
    std::lock_guard lk(mu_);
    return busy_;
}

int WorkerPool::peakBusy() const {
    std::lock_guard lk(mu_);
    return peakBusy_;
}

std::size_t WorkerPool::waiting() const {
    std::lock_guard lk(mu_);
    return queue_.size();
}

// --- Gateway ----------------------------------------------------------------

GatewayConfig validateConfig(GatewayConfig cfg) {
    if (cfg.serviceTime.count() <= 0) throw InvalidPolicy("service_time_ms", "service time must be > 0");
    if (cfg.workers < 1) throw InvalidPolicy("workers", "worker pool size must be >= 1");
    if (cfg.jitter.count() < 0 || cfg.jitter >= cfg.serviceTime) {
        throw InvalidPolicy("jitter_ms", "jitter must be in [0, service time)");
    }
    return cfg;
}

Gateway::Gateway(GatewayConfig cfg)
    : cfg_(validateConfig(cfg)),
      pool_(cfg_.workers, cfg_.acceptQueueCapacity),
      rng_(cfg_.seed),
      http_(cfg_.threads ? cfg_.threads : std::min<std::size_t>(cfg_.acceptQueueCapacity + 64, 2048)) {
    auto& srv = http_.routes();

    srv.Put("/admin/gw/workers", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = detail::parseBody(req, res);
        if (!body) return;
        try {
            setWorkers(body->at("workers").get<int>());
            detail::replyJson(res, statsJson());
        } catch (const std::exception& e) {
            detail::replyError(res, 400, e.what());
        }
    });
    srv.Get("/admin/gw/stats", [this](const httplib::Request&, httplib::Response& res) {
        detail::replyJson(res, statsJson());
    });

    srv.Post(R"(/([^/]+)/data)", [this](const httplib::Request& req, httplib::Response& res) {
        auto app = req.matches[1].str();
        auto lease = pool_.acquire();
        if (!lease) {
            std::lock_guard lk(mu_);
            overflowed_++;
            res.set_header(std::string(headers::kGwAction), "overflow");
            detail::replyError(res, 503, "accept queue full");
            return;
        }
        {
            std::lock_guard lk(mu_);
            accepted_++;
        }
        std::this_thread::sleep_for(drawServiceTime());
        lease->release();

        std::uint64_t id;
        {
            std::lock_guard lk(mu_);
            id = ++served_;
        }
        detail::replyJson(res, {{"resource_id", app + "-" + std::to_string(id)}, {"application", app}}, 201);
    });
}

Gateway::~Gateway() { stop(); }

void Gateway::stop() {
    pool_.shutdown();
    http_.stop();
}

std::chrono::nanoseconds Gateway::drawServiceTime() {
    std::chrono::nanoseconds base = cfg_.serviceTime;
    if (cfg_.jitter.count() == 0) return base;
    std::chrono::nanoseconds j = cfg_.jitter;
    std::lock_guard lk(mu_);
    std::uniform_int_distribution<std::int64_t> dist(-j.count(), j.count());
    return base + std::chrono::nanoseconds(dist(rng_));
}

void Gateway::setWorkers(int n) { pool_.resize(n); }

GatewayStats Gateway::stats() const {
    GatewayStats s;
    {
        std::lock_guard lk(mu_);
        s.accepted = accepted_;
        s.served = served_;
        s.overflowed = overflowed_;
    }
    s.workers = pool_.workers();
    s.busy = pool_.busy();
    s.peakBusy = pool_.peakBusy();
    s.waiting = pool_.waiting();
    return s;
}

Json Gateway::statsJson() const {
    auto s = stats();
    return Json{{"accepted", s.accepted}, {"served", s.served},     {"overflowed", s.overflowed},
                {"workers", s.workers},   {"busy", s.busy},         {"peak_busy", s.peakBusy},
                {"waiting", s.waiting}};
}

} // namespace mqos::gateway
