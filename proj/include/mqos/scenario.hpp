#pragma once

// Scenario files and the in-process runner.
//
// A scenario is a JSON document:
//   { "name": "nursing-home",
//     "duration_s": 60,                 // default bound for injectors without one
//     "seed": 1,
//     "gateway":  {"instances": 1, "service_time_ms": 102, "jitter_ms": 0,
//                  "workers": 1, "accept_queue": 2000},
//     "balancer": {"strategy": "WEIGHTED_ROUND_ROBIN", "weights": [2, 1]},   // optional
//     "cmc":      <CMC policy document>,
//     "pep":      {"policy": <PepPolicy>, "rejection_mode": "DETERMINISTIC",
//                  "queue_capacity": 1000, "forwarder_slots": 4, "delay_capacity": 1000},
//     "autonomic": {"enabled": true, "rules": [<AdaptationRule>...], "enter_k": 5, "recover_n": 12},
//     "resource_interval_ms": 1000,
//     "injectors": [ {"profile": <AppProfile>, "path": "/postop/data", "phase_ms": 0,
//                     "total_requests": 100 | "duration_s": 20} ],
//     "assertions": [ {"kind": "mean_rtt_below", "injector": "PostOp_Inj", "ms": 350,
//                      "mode": "managed"} ] }
//
// Assertion kinds:
//   mean_rtt_below, median_rtt_below, max_rtt_below, max_rtt_above   {injector, ms}
//   rtt_slope_positive                                               {injector}
//   loss_below, loss_above                                           {injector, value}
//   median_overhead_below                                            {ms}
//   state_cycle                                                      {states: [...]}
//   accounting_closed                                                (always checked)
// "mode" restricts an assertion to "baseline" or "managed"; absent means both.

#include "mqos/cluster.hpp"
#include "mqos/gateway.hpp"
#include "mqos/metrics.hpp"
#include "mqos/model.hpp"
#include "mqos/model_json.hpp"
#include "mqos/pep.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mqos::scenario {

class InvalidScenario : public Error {
public:
    using Error::Error;
};

class ComponentStartupFailed : public Error {
public:
    using Error::Error;
};

enum class Mode { Baseline, Managed };

std::string_view toString(Mode m) noexcept;
Mode parseMode(std::string_view s);

struct GatewaySpec {
    gateway::GatewayConfig config;
    int instances = 1;
};

struct BalancerSpec {
    cluster::Strategy strategy = cluster::Strategy::RoundRobin;
    /// One per gateway instance; empty means all 1.
    std::vector<int> weights;
};

struct PepSpec {
    PepPolicy policy;
    pep::RejectionMode rejectionMode = pep::RejectionMode::Deterministic;
    std::size_t queueCapacity = 1000;
    std::size_t forwarderSlots = 4;
    std::size_t delayCapacity = 1000;
};

struct AutonomicSpec {
    bool enabled = true;
    std::vector<AdaptationRule> rules = defaultAdaptationRules();
    int enterK = 5;
    int recoverN = 12;
};

struct InjectorEntry {
    AppProfile profile;
    std::string path;
    double phaseMs = 0;
    std::optional<std::uint64_t> totalRequests;
    std::optional<double> durationS;
    std::optional<std::uint64_t> seed;
};

struct Assertion {
    std::string kind;
    std::string injector;
    double value = 0;
    std::vector<RttState> states;
    std::optional<Mode> mode;
};

struct Scenario {
    std::string name = "scenario";
    double durationS = 60;
    std::uint64_t seed = 1;
    GatewaySpec gateway;
    std::optional<BalancerSpec> balancer;
    CmcPolicy cmc;
    PepSpec pep;
    AutonomicSpec autonomic;
    std::chrono::milliseconds resourceInterval{1000};
    std::vector<InjectorEntry> injectors;
    std::vector<Assertion> assertions;
};

/// Throws InvalidScenario. Syntax errors carry "line L, column C"; semantic
/// errors name the offending key.
Scenario parseScenario(const std::string& text, const std::string& origin = "<scenario>");
Scenario loadScenario(const std::filesystem::path& path);

struct AssertionResult {
    std::string description;
    bool passed = false;
    std::string detail;
};

/// Evaluates one assertion. Pure.
AssertionResult evaluate(const Assertion& a, const metrics::Summary& summary, const metrics::Dataset& ds);

struct RunOptions {
    Mode mode = Mode::Managed;
    /// Where to write the CSVs, summary.json and knowledge.log. Empty: none.
    std::filesystem::path outDir;
    /// Overrides the scenario seed.
    std::optional<std::uint64_t> seed;
    /// Overrides every injector's bound with this duration (used by tests).
    std::optional<double> durationS;
};

struct RunResult {
    Mode mode = Mode::Managed;
    metrics::Dataset dataset;
    metrics::Summary summary;
    std::vector<AssertionResult> assertions;
    bool passed = false;
    /// Final stats of each component, keyed by component name.
    Json components = Json::object();
};

/// Wires the topology for the mode, runs every injector to completion, shuts
/// the components down in order (injectors first, gateways last) and
/// evaluates the assertions that apply to the mode.
/// Throws ComponentStartupFailed.
RunResult runScenario(const Scenario& sc, const RunOptions& opts);

Json toJson(const RunResult& r);

} // namespace mqos::scenario
