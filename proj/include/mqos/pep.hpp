#pragma once

#include "mqos/http.hpp"
#include "mqos/model.hpp"
#include "mqos/model_json.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace mqos::pep {

class QueueFull : public Error {
public:
    explicit QueueFull(Priority p)
        : Error("queue full for " + std::string(shortName(p))), priority(p) {}
    Priority priority;
};

class DelayQueueFull : public Error {
public:
    DelayQueueFull() : Error("delay holding buffer full") {}
};

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

/// Mechanisms to apply, always in the order REJECT -> DELAY -> SCHEDULE.
std::vector<Mechanism> control(const PepPolicy& policy);

/// Unmarked requests are handled as LOW.
inline Priority effectivePriority(const TaggedRequest& req) noexcept {
    return req.priority().value_or(Priority::Low);
}

// ---------------------------------------------------------------------------
// M1: rejecter
// ---------------------------------------------------------------------------

enum class RejectionMode { Deterministic, Probabilistic };

std::string_view toString(RejectionMode m) noexcept;
RejectionMode parseRejectionMode(std::string_view s);

/// Request k (1-based) at percentage p is rejected iff
/// floor(k*p/100) > floor((k-1)*p/100), so after n requests exactly
/// floor(n*p/100) have been rejected.
constexpr bool deterministicRejects(std::uint64_t k, int pct) noexcept {
    auto p = static_cast<std::uint64_t>(pct);
    return (k * p) / 100 > ((k - 1) * p) / 100;
}

class Rejecter {
public:
    struct Counters {
        std::uint64_t seen = 0;
        std::uint64_t rejected = 0;
    };

    explicit Rejecter(RejectionMode mode = RejectionMode::Deterministic, std::uint64_t seed = 0);

    /// Counts the request and returns true if it must be rejected.
    bool reject(Priority p, int pct);
    /// Starts a fresh percentage window for every priority.
    void reset();
    Counters counters(Priority p) const;
    RejectionMode mode() const noexcept { return mode_; }

private:
    RejectionMode mode_;
    mutable std::mutex mu_;
    PerPriority<Counters> counters_{};
    std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// M2: delayer
// ---------------------------------------------------------------------------

/// Holds requests for their configured duration. Each request waits on its
/// own handler thread, so holds never serialize; capacity bounds how many
/// may be held at once.
class Delayer {
public:
    explicit Delayer(std::size_t capacity = 1000) : capacity_(capacity) {}

    /// Blocks the caller for d (returns early on shutdown). Throws
    /// DelayQueueFull when capacity requests are already held.
    std::chrono::nanoseconds hold(std::chrono::milliseconds d);
    std::size_t holding() const;
    void shutdown();

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::size_t holding_ = 0;
    bool stopping_ = false;
};

// ---------------------------------------------------------------------------
// M3: priority queues
// ---------------------------------------------------------------------------

/// One bounded FIFO per priority plus the dispatch discipline. Not
/// thread-safe; Scheduler wraps it.
///
/// WFQ uses self-clocked virtual time with unit request cost: a request
/// enqueued on queue i gets finish = max(V, lastFinish_i) + 1/w_i and the
/// smallest head finish is served next (ties go to the higher priority);
/// V becomes the finish tag of the request just dispatched. Tags are kept as
/// integers scaled by lcm(weights) so 1/w_i is exact.
template <class T>
class PriorityQueues {
public:
    explicit PriorityQueues(std::size_t capacityPerQueue = 1000) : capacity_(capacityPerQueue) {
        configure(Discipline::PriorityFirst, PerPriority<int>::of(1, 1, 1));
    }

    void configure(Discipline d, const PerPriority<int>& weights) {
        discipline_ = d;
        std::uint64_t l = 1;
        for (auto p : kPrioritiesByPrecedence) l = std::lcm(l, static_cast<std::uint64_t>(weights[p]));
        if (scale_ % l != 0) {
            // Rescale existing tags exactly so ordering survives a weight change.
            auto factor = std::lcm(scale_, l) / scale_;
            virtualTime_ *= factor;
            for (auto p : kPrioritiesByPrecedence) {
                lastFinish_[p] *= factor;
                for (auto& e : queues_[p]) e.finish *= factor;
            }
            scale_ *= factor;
        }
        for (auto p : kPrioritiesByPrecedence) {
            increment_[p] = scale_ / static_cast<std::uint64_t>(weights[p]);
        }
    }

    /// Throws QueueFull when the priority's queue is at capacity.
    void push(Priority p, T item) {
        auto& q = queues_[p];
        if (q.size() >= capacity_) throw QueueFull(p);
        auto start = std::max(virtualTime_, lastFinish_[p]);
        auto finish = start + increment_[p];
        lastFinish_[p] = finish;
        q.push_back(Entry{std::move(item), finish});
    }

    /// Next request per the discipline, or nullopt iff all queues are empty.
    std::optional<std::pair<Priority, T>> pop() {
        std::optional<Priority> chosen;
        for (auto p : kPrioritiesByPrecedence) {
            if (queues_[p].empty()) continue;
            if (discipline_ == Discipline::PriorityFirst) {
                chosen = p;
                break;
            }
            if (!chosen || queues_[p].front().finish < queues_[*chosen].front().finish) chosen = p;
        }
        if (!chosen) return std::nullopt;
        auto& q = queues_[*chosen];
        auto entry = std::move(q.front());
        q.pop_front();
        if (discipline_ == Discipline::Wfq) virtualTime_ = std::max(virtualTime_, entry.finish);
        return std::make_pair(*chosen, std::move(entry.item));
    }

    std::size_t size(Priority p) const noexcept { return queues_[p].size(); }
    std::size_t total() const noexcept {
        return size(Priority::High) + size(Priority::Medium) + size(Priority::Low);
    }
    bool empty() const noexcept { return total() == 0; }
    std::size_t capacity() const noexcept { return capacity_; }
    Discipline discipline() const noexcept { return discipline_; }

private:
    struct Entry {
        T item;
        std::uint64_t finish;
    };

    std::size_t capacity_;
    Discipline discipline_ = Discipline::PriorityFirst;
    PerPriority<std::deque<Entry>> queues_;
    PerPriority<std::uint64_t> lastFinish_{};
    PerPriority<std::uint64_t> increment_{};
    std::uint64_t virtualTime_ = 0;
    std::uint64_t scale_ = 1;
};

/// Concurrent front of PriorityQueues with a bounded number of forwarder
/// slots. admit() blocks until the request is dispatched; dispatch happens
/// whenever a request arrives or a slot frees, so the forwarder never idles
/// with work queued.
class Scheduler {
public:
    class Slot {
    public:
        Slot() = default;
        Slot(Slot&& o) noexcept : owner_(std::exchange(o.owner_, nullptr)) {}
        Slot& operator=(Slot&& o) noexcept {
            if (this != &o) {
                release();
                owner_ = std::exchange(o.owner_, nullptr);
            }
            return *this;
        }
        ~Slot() { release(); }
        void release();

    private:
        friend class Scheduler;
        explicit Slot(Scheduler* s) : owner_(s) {}
        Scheduler* owner_ = nullptr;
    };

    Scheduler(std::size_t capacityPerQueue = 1000, std::size_t forwarderSlots = 4);
    ~Scheduler();

    void configure(Discipline d, const PerPriority<int>& weights);
    void setSlots(std::size_t n);

    /// Queues the caller and waits for dispatch. Throws QueueFull, or Error
    /// when shut down while waiting.
    Slot admit(Priority p);

    std::size_t queued(Priority p) const;
    std::uint64_t dispatched(Priority p) const;
    std::size_t inUse() const;
    std::size_t slots() const;
    void shutdown();

private:
    struct Waiter {
        std::condition_variable cv;
        bool granted = false;
        bool cancelled = false;
    };

    void dispatchLocked();
    void releaseSlot();

    mutable std::mutex mu_;
    PriorityQueues<std::shared_ptr<Waiter>> queues_;
    std::size_t slots_;
    std::size_t inUse_ = 0;
    PerPriority<std::uint64_t> dispatched_{};
    bool stopping_ = false;
};

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

struct PepConfig {
    Endpoint upstream;
    PepPolicy policy;
    RejectionMode rejectionMode = RejectionMode::Deterministic;
    std::uint64_t seed = 0;
    std::size_t queueCapacity = 1000;
    std::size_t forwarderSlots = 4;
    std::size_t delayCapacity = 1000;
    std::size_t threads = 256;
};

/// Result of running a request through the mechanism chain.
enum class Outcome { Forwarded, Rejected, DelayOverflow, QueueOverflow, ShuttingDown };

struct PriorityStats {
    std::uint64_t seen = 0;
    std::uint64_t rejected = 0;
    std::uint64_t delayed = 0;
    std::uint64_t delayOverflow = 0;
    std::uint64_t enqueued = 0;
    std::uint64_t queueOverflow = 0;
    std::uint64_t dispatched = 0;
    std::uint64_t forwarded = 0;
    std::uint64_t upstreamErrors = 0;
};

/// HTTP front of the PEP.
///   any non-admin path     -> M1 -> M2 -> M3 per policy, then proxy upstream
///   PUT /admin/pep/policy  -> replace policy (identical policy: no-op)
///   GET /admin/pep/policy
///   GET /admin/pep/stats   -> per-priority counters, queue lengths, overhead
///   PUT /admin/pep/upstream {"address": "host:port"}
class PepServer {
public:
    explicit PepServer(PepConfig cfg);
    ~PepServer();

    void start(const std::string& host = "127.0.0.1", int port = 0) { http_.start(host, port); }
    void stop();
    Endpoint endpoint() const { return http_.endpoint(); }

    /// Validates and installs the policy. Returns false if it equals the
    /// current one (nothing reset).
    bool setPolicy(const PepPolicy& policy);
    PepPolicy policy() const;
    void setUpstream(Endpoint ep);
    Endpoint upstream() const;

    PriorityStats stats(Priority p) const;
    Json statsJson() const;
    /// Median CMC+PEP request-path overhead in ms over the recorded window.
    std::optional<double> medianOverheadMs() const;

private:
    struct Processed {
        Outcome outcome;
        ProxyResponse response;
    };
    Processed process(TaggedRequest req);
    void recordOverhead(std::int64_t ns);

    PepConfig cfg_;
    mutable std::mutex mu_;
    std::shared_ptr<const PepPolicy> policy_;
    Endpoint upstream_;
    Rejecter rejecter_;
    Delayer delayer_;
    Scheduler scheduler_;
    PerPriority<PriorityStats> stats_{};
    std::vector<std::int64_t> overheadNs_;
    std::size_t overheadNext_ = 0;
    HttpServer http_;
};

} // namespace mqos::pep
