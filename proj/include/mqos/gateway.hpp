#pragma once

#include "mqos/http.hpp"
#include "mqos/model.hpp"
#include "mqos/model_json.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <random>

namespace mqos::gateway {

/// Bounded worker pool with a FIFO accept queue. Requests beyond the
/// queue capacity are turned away; resizing takes effect for waiting
/// requests immediately and never interrupts requests in service.
class WorkerPool {
public:
    class Lease {
    public:
        Lease() = default;
        Lease(Lease&& o) noexcept : pool_(std::exchange(o.pool_, nullptr)) {}
        Lease& operator=(Lease&& o) noexcept {
            if (this != &o) {
                release();
                pool_ = std::exchange(o.pool_, nullptr);
            }
            return *this;
        }
        ~Lease() { release(); }
        void release();

    private:
        friend class WorkerPool;
        explicit Lease(WorkerPool* p) : pool_(p) {}
        WorkerPool* pool_ = nullptr;
    };

    WorkerPool(int workers, std::size_t acceptCapacity);

    /// Waits for a worker in arrival order. nullopt when the accept queue is
    /// full or the pool is shutting down.
    std::optional<Lease> acquire();
    void resize(int workers);
    void shutdown();

    int workers() const;
    int busy() const;
    int peakBusy() const;
    std::size_t waiting() const;

private:
    void releaseOne();

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::uint64_t> queue_;
    std::uint64_t nextTicket_ = 0;
    int workers_;
    int busy_ = 0;
    int peakBusy_ = 0;
    std::size_t capacity_;
    bool stopping_ = false;
};

struct GatewayConfig {
    std::chrono::milliseconds serviceTime{100};
    /// Uniform jitter in [-jitter, +jitter] around serviceTime.
    std::chrono::milliseconds jitter{0};
    int workers = 1;
    std::size_t acceptQueueCapacity = 500;
    std::uint64_t seed = 1;
    /// HTTP threads; 0 sizes it to hold a full accept queue.
    std::size_t threads = 0;
};

/// Validates service time > 0, workers >= 1, jitter < service time.
GatewayConfig validateConfig(GatewayConfig cfg);

struct GatewayStats {
    std::uint64_t accepted = 0;
    std::uint64_t served = 0;
    std::uint64_t overflowed = 0;
    int workers = 0;
    int busy = 0;
    int peakBusy = 0;
    std::size_t waiting = 0;
};

/// Stand-in for the middleware gateway. Each request queues for a worker,
/// holds it for the service time, then answers 201.
///   POST /{application}/data  -> 201 {"resource_id": "...", "application": "..."}
///                                503 + X-GW-Action: overflow when the queue is full
///   PUT  /admin/gw/workers {"workers": n}
///   GET  /admin/gw/stats
class Gateway {
public:
    explicit Gateway(GatewayConfig cfg);
    ~Gateway();

    void start(const std::string& host = "127.0.0.1", int port = 0) { http_.start(host, port); }
    void stop();
    Endpoint endpoint() const { return http_.endpoint(); }

    void setWorkers(int n);
    GatewayStats stats() const;
    Json statsJson() const;

private:
    std::chrono::nanoseconds drawServiceTime();

    GatewayConfig cfg_;
    WorkerPool pool_;
    mutable std::mutex mu_;
    std::mt19937_64 rng_;
    std::uint64_t accepted_ = 0, served_ = 0, overflowed_ = 0;
    HttpServer http_;
};

} // namespace mqos::gateway
