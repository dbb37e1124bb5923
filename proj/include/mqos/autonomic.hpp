#pragma once

#include "mqos/http.hpp"
#include "mqos/model.hpp"
#include "mqos/model_json.hpp"

#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mqos::autonomic {

class UnknownState : public Error {
public:
    explicit UnknownState(RttState s)
        : Error("no adaptation rule for state " + std::string(toString(s))) {}
};

class ExecutionFailed : public Error {
public:
    using Error::Error;
};

struct RttSample {
    std::string requestId;
    Priority priority = Priority::High;
    double rttMs = 0;
    std::int64_t completedAtNs = 0;
};

// ---------------------------------------------------------------------------
// Analyze
// ---------------------------------------------------------------------------

/// RTT state with streak hysteresis. Each sample lands in one band; that
/// band's streak grows and the other streaks reset. The state moves to a
/// degraded band after enterK consecutive samples in it, and back to NORMAL
/// after recoverN consecutive NORMAL samples.
class StateMachine {
public:
    explicit StateMachine(std::vector<AdaptationRule> rules = defaultAdaptationRules(),
                          int enterK = 5, int recoverN = 12);

    /// Returns the new state when this sample causes a transition.
    std::optional<RttState> observe(double rttMs);

    RttState current() const noexcept { return current_; }
    int streak(RttState s) const noexcept { return streak_[static_cast<std::size_t>(s)]; }
    RttState bandOf(double rttMs) const { return ruleForRtt(rules_, rttMs).state; }
    int required(RttState s) const noexcept { return s == RttState::Normal ? recoverN_ : enterK_; }
    const std::vector<AdaptationRule>& rules() const noexcept { return rules_; }

private:
    std::vector<AdaptationRule> rules_;
    int enterK_;
    int recoverN_;
    RttState current_ = RttState::Normal;
    std::array<int, 3> streak_{};
};

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

/// Baseline policy with REJECT as the only mechanism and the state's
/// percentages (HIGH always 0). Throws UnknownState.
PepPolicy plan(RttState state, const std::vector<AdaptationRule>& rules, const PepPolicy& baseline = {});

// ---------------------------------------------------------------------------
// Knowledge
// ---------------------------------------------------------------------------

/// Append-only log of line-delimited JSON records. Kept in memory as well so
/// the running manager can be queried.
class KnowledgeLog {
public:
    /// Empty path keeps the log in memory only.
    explicit KnowledgeLog(const std::string& path = {});

    void append(Json record);
    std::vector<Json> entries() const;
    std::vector<Json> entries(std::string_view kind) const;

private:
    mutable std::mutex mu_;
    std::ofstream file_;
    std::vector<Json> entries_;
};

// ---------------------------------------------------------------------------
// Execute
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int attempts = 5;
    std::chrono::milliseconds initialBackoff{50};
    std::chrono::milliseconds maxBackoff{1000};
};

/// Pushes a policy to the PEP admin endpoint. Throws ExecutionFailed.
void execute(const PepPolicy& policy, const Endpoint& pepAdmin);

/// Delivers policies on its own thread so the control loop never blocks on
/// the PEP. Only the latest pending policy is delivered; a newer one
/// supersedes one still being retried.
class PolicyExecutor {
public:
    using Deliver = std::function<void(const PepPolicy&)>;
    using Report = std::function<void(const PepPolicy&, RttState, bool ok, const std::string& error)>;

    PolicyExecutor(Deliver deliver, Report report, RetryPolicy retry = {});
    ~PolicyExecutor();

    void submit(PepPolicy policy, RttState state);
    /// Waits until nothing is pending or in flight.
    void drain();

private:
    void run(std::stop_token st);

    Deliver deliver_;
    Report report_;
    RetryPolicy retry_;
    std::mutex mu_;
    std::condition_variable_any cv_;
    std::optional<std::pair<PepPolicy, RttState>> pending_;
    bool busy_ = false;
    std::uint64_t generation_ = 0;
    std::jthread thread_;
};

// ---------------------------------------------------------------------------
// Manager
// ---------------------------------------------------------------------------

struct ManagerConfig {
    std::vector<AdaptationRule> rules = defaultAdaptationRules();
    int enterK = 5;
    int recoverN = 12;
    PepPolicy baseline;
    /// PEP admin endpoint. Unset: policies are only logged.
    std::optional<Endpoint> pepAdmin;
    std::string knowledgeLogPath;
    RetryPolicy retry;
    /// Log every sample, not only transitions and actions.
    bool logSamples = true;
};

struct TransitionRecord {
    std::int64_t atNs = 0;
    std::uint64_t sampleIndex = 0;
    RttState from = RttState::Normal;
    RttState to = RttState::Normal;
};

/// Monitor -> analyze -> plan -> execute loop over HIGH-priority RTT
/// samples. submit() is thread-safe; samples are processed one at a time in
/// arrival order on the manager's own thread.
///   POST /admin/am/sample {"rtt_ms": 123.4, "priority": "PRIORITY_HIGH", "request_id": "..."}
///   GET  /admin/am/state
class AutonomicManager {
public:
    explicit AutonomicManager(ManagerConfig cfg);
    ~AutonomicManager();

    void start(const std::string& host = "127.0.0.1", int port = 0) { http_.start(host, port); }
    void stop();
    Endpoint endpoint() const { return http_.endpoint(); }

    /// Non-HIGH samples are ignored.
    void submit(RttSample sample);
    /// Blocks until every submitted sample has been processed and every
    /// resulting policy delivery attempt has finished.
    void flush();

    RttState state() const;
    std::vector<TransitionRecord> transitions() const;
    std::uint64_t samplesProcessed() const;
    const KnowledgeLog& knowledge() const noexcept { return log_; }
    Json stateJson() const;

private:
    void loop(std::stop_token st);
    void process(const RttSample& s);

    ManagerConfig cfg_;
    KnowledgeLog log_;
    mutable std::mutex mu_;
    std::condition_variable_any cv_;
    std::condition_variable_any idle_;
    std::deque<RttSample> inbox_;
    bool processing_ = false;
    StateMachine sm_;
    std::vector<TransitionRecord> transitions_;
    std::uint64_t processed_ = 0;
    PolicyExecutor executor_;
    std::jthread loop_;
    HttpServer http_;
};

} // namespace mqos::autonomic
