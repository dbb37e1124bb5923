#pragma once

// Horizontal scalability: a load balancer spreading requests over gateway
// instances. Vertical scalability: runtime resizing of a gateway's worker
// pool.
//
// Federation (moving a platform component such as its database to another
// machine) is a deployment action rather than a request-path mechanism and
// has no counterpart here; a federated component would appear to the
// balancer as one more instance address.

#include "mqos/http.hpp"
#include "mqos/model.hpp"
#include "mqos/model_json.hpp"

#include <chrono>
#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

namespace mqos::cluster {

class NoHealthyInstance : public Error {
public:
    NoHealthyInstance() : Error("no healthy instance") {}
};

class GatewayUnreachable : public Error {
public:
    using Error::Error;
};

enum class Strategy { RoundRobin, WeightedRoundRobin, LoadOriented };

std::string_view toString(Strategy s) noexcept;
Strategy parseStrategy(std::string_view s);

struct Instance {
    Endpoint address;
    int weight = 1;
};

/// Smooth weighted round robin: each pick adds every eligible weight to its
/// running credit, takes the largest credit (first on ties) and charges it
/// the eligible total. The pick sequence repeats with period sum(weights)
/// and every period holds exactly weight_i picks of instance i.
class SmoothWrr {
public:
    /// eligible[i] false excludes instance i. Throws NoHealthyInstance.
    std::size_t next(std::span<const int> weights, const std::vector<bool>& eligible);
    void reset() { credit_.clear(); }

private:
    std::vector<std::int64_t> credit_;
};

/// Healthy instance with the smallest in-flight count; ties go to the
/// earliest instance. Throws NoHealthyInstance.
std::size_t leastLoaded(std::span<const std::int64_t> inFlight, const std::vector<bool>& healthy);

struct InstanceStats {
    Endpoint address;
    int weight = 1;
    std::int64_t inFlight = 0;
    std::uint64_t picks = 0;
    std::uint64_t failures = 0;
    bool healthy = true;
};

/// Thread-safe instance set. Every pick() must be paired with release().
class InstancePool {
public:
    struct Pick {
        std::size_t index;
        Endpoint address;
    };

    InstancePool(std::vector<Instance> instances, Strategy strategy,
                 std::chrono::milliseconds cooldown = std::chrono::milliseconds{1000});

    Pick pick();
    /// Ends a request. A failure marks the instance unhealthy for the cooldown.
    void release(std::size_t index, bool success);
    void setHealthy(std::size_t index, bool healthy);
    void reconfigure(std::vector<Instance> instances, Strategy strategy);

    Strategy strategy() const;
    std::vector<InstanceStats> stats() const;

private:
    struct Slot {
        Instance instance;
        std::int64_t inFlight = 0;
        std::uint64_t picks = 0;
        std::uint64_t failures = 0;
        bool healthy = true;
        std::chrono::steady_clock::time_point retryAt{};
    };

    std::vector<bool> eligibleLocked();

    mutable std::mutex mu_;
    std::vector<Slot> slots_;
    Strategy strategy_;
    std::chrono::milliseconds cooldown_;
    std::size_t cursor_ = 0;
    SmoothWrr wrr_;
    std::vector<bool> lastEligible_;
};

struct BalancerConfig {
    std::vector<Instance> instances;
    Strategy strategy = Strategy::RoundRobin;
    std::chrono::milliseconds cooldown{1000};
    std::size_t threads = 256;
};

/// HTTP front of the balancer.
///   any non-admin path -> pick an instance and proxy (503 if none healthy)
///   PUT /admin/lb/pool  {"strategy": "WEIGHTED_ROUND_ROBIN",
///                        "instances": [{"address": "127.0.0.1:9001", "weight": 2}]}
///   GET /admin/lb/stats
class BalancerServer {
public:
    explicit BalancerServer(BalancerConfig cfg);

    void start(const std::string& host = "127.0.0.1", int port = 0) { http_.start(host, port); }
    void stop() { http_.stop(); }
    Endpoint endpoint() const { return http_.endpoint(); }

    InstancePool& pool() noexcept { return pool_; }
    Json statsJson() const;

private:
    InstancePool pool_;
    HttpServer http_;
};

/// Sets the worker pool size of the gateway behind gatewayAdmin. Throws
/// GatewayUnreachable, or InvalidPolicy for new_size < 1.
void resizeWorkers(const Endpoint& gatewayAdmin, int newSize);

} // namespace mqos::cluster
