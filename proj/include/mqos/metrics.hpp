#pragma once

#include "mqos/http.hpp"
#include "mqos/model.hpp"
#include "mqos/model_json.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mqos::metrics {

class EmptyDataset : public Error {
public:
    EmptyDataset() : Error("dataset has no records") {}
};

enum class Outcome { Served, Rejected, Overflowed, Failed };

std::string_view toString(Outcome o) noexcept;
Outcome parseOutcome(std::string_view s);

/// One request event as seen by its injector.
struct MetricsRecord {
    /// Send time, ms since the start of the run.
    double timestampMs = 0;
    std::string injector;
    std::uint64_t requestIndex = 0;
    Priority priority = Priority::Low;
    Outcome outcome = Outcome::Served;
    std::optional<double> rttMs;         // present iff SERVED
    std::optional<double> pepOverheadMs; // when the PEP reported it
};

struct ResourceSnapshot {
    double timestampMs = 0;
    std::string component;
    std::optional<double> cpuFraction; // of one core
    std::optional<double> rssMb;
};

struct StateChange {
    double timestampMs = 0;
    RttState state = RttState::Normal;
};

struct Dataset {
    std::vector<MetricsRecord> records;
    std::vector<ResourceSnapshot> resources;
    /// Initial state first, then every transition.
    std::vector<StateChange> states;
    /// Requests each injector reports having sent.
    std::map<std::string, std::uint64_t> sent;
    /// Per-injector RTT threshold used to locate the saturated window.
    std::map<std::string, double> rttThresholdMs;
    double durationMs = 0;
    bool truncated = false;
    /// Records refused by the recorder (always 0 for the unbounded recorder).
    std::uint64_t dropped = 0;
};

struct RttStats {
    double mean = 0;
    double median = 0;
    double max = 0;
};

struct InjectorSummary {
    Priority priority = Priority::Low;
    std::uint64_t sent = 0;
    std::uint64_t served = 0;
    std::uint64_t rejected = 0;
    std::uint64_t overflowed = 0;
    std::uint64_t failed = 0;
    /// (rejected + overflowed + failed) / sent
    double loss = 0;
    std::optional<RttStats> rtt;
    std::optional<double> medianOverheadMs;
    /// Least-squares slope of RTT over send time (ms per s) across the
    /// saturated window: from the first RTT above the injector's threshold to
    /// the end of the run. Absent without a threshold crossing.
    std::optional<double> saturatedSlopeMsPerS;
    std::optional<double> firstExceedanceMs; // send time of that first sample
    bool closed() const noexcept { return sent == served + rejected + overflowed + failed; }
};

struct ComponentSummary {
    std::optional<double> meanCpuPercent;
    std::optional<double> peakRssMb;
    std::size_t snapshots = 0;
};

struct Summary {
    std::map<std::string, InjectorSummary> injectors;
    std::map<std::string, double> stateShares; // fraction of run time per state
    std::vector<std::string> stateSequence;
    std::map<std::string, ComponentSummary> components;
    bool truncated = false;
};

/// Pure function of the dataset. Throws EmptyDataset.
Summary summarize(const Dataset& ds);
Json toJson(const Summary& s);

/// Least-squares slope dy/dx.
std::optional<double> leastSquaresSlope(const std::vector<std::pair<double, double>>& xy);
double median(std::vector<double> v);

// ---------------------------------------------------------------------------
// Recording
// ---------------------------------------------------------------------------

struct RttObservation {
    std::string requestId;
    Priority priority;
    double rttMs;
    std::int64_t completedAtNs;
};

/// Thread-safe append-only collector for one run. SERVED HIGH records are
/// passed on to the sample sink (the autonomic manager).
class MetricsRecorder {
public:
    using SampleSink = std::function<void(const RttObservation&)>;

    void setSampleSink(SampleSink sink);
    void record(MetricsRecord r, std::int64_t completedAtNs = 0);
    void recordResource(ResourceSnapshot s);
    void recordState(StateChange s);
    void setSent(const std::string& injector, std::uint64_t n);
    void setThreshold(const std::string& injector, double ms);
    void finish(double durationMs, bool truncated);

    Dataset dataset() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    Dataset ds_;
    SampleSink sink_;
};

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRequestsSchema = "# mqos-requests v1";
inline constexpr std::string_view kResourcesSchema = "# mqos-resources v1";
inline constexpr std::string_view kStatesSchema = "# mqos-states v1";

/// Request rows: timestamp_ms,injector,request_index,priority,outcome,rtt_ms,pep_overhead_ms
void writeRequestsCsv(const Dataset& ds, const std::filesystem::path& path,
                      std::optional<std::string> onlyInjector = std::nullopt);
void writeResourcesCsv(const Dataset& ds, const std::filesystem::path& path);
void writeStatesCsv(const Dataset& ds, const std::filesystem::path& path);
/// Reads back a file written by writeRequestsCsv.
std::vector<MetricsRecord> readRequestsCsv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Resources
// ---------------------------------------------------------------------------

struct ComponentHandle {
    std::string name;
    int pid = 0; // 0: this process
};

/// CPU and resident memory of a process from /proc. Both fields are empty
/// where /proc is unavailable.
class ProcessProbe {
public:
    explicit ProcessProbe(int pid = 0);
    /// CPU fraction since the previous call (empty on the first call).
    ResourceSnapshot sample(const std::string& component, double timestampMs);

private:
    int pid_;
    std::optional<double> lastCpuS_;
    std::optional<std::int64_t> lastWallNs_;
};

/// Samples every component at a fixed interval on a background thread.
class ResourceSampler {
public:
    ResourceSampler(std::vector<ComponentHandle> components, std::chrono::milliseconds interval,
                    std::function<void(ResourceSnapshot)> sink, std::int64_t originNs);
    ~ResourceSampler();
    void stop();

private:
    std::jthread thread_;
};

/// Serves GET /admin/metrics/summary for a live recorder.
class SummaryEndpoint {
public:
    explicit SummaryEndpoint(const MetricsRecorder& recorder);
    void start(const std::string& host = "127.0.0.1", int port = 0) { http_.start(host, port); }
    void stop() { http_.stop(); }
    Endpoint endpoint() const { return http_.endpoint(); }

private:
    const MetricsRecorder& recorder_;
    HttpServer http_;
};

} // namespace mqos::metrics
