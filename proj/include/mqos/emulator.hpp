#pragma once

#include "mqos/http.hpp"
#include "mqos/metrics.hpp"
#include "mqos/model.hpp"

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mqos::emulator {

class StartupFailed : public Error {
public:
    using Error::Error;
};

/// One independent traffic source. Exactly one of totalRequests and
/// durationS bounds the run.
struct InjectorSpec {
    AppProfile profile;
    Endpoint target;
    /// Request path, e.g. "/postop/data".
    std::string path = "/app/data";
    std::optional<std::uint64_t> totalRequests;
    std::optional<double> durationS;
    std::uint64_t seed = 1;
    /// X-Source-Id value; defaults to the profile name.
    std::string sourceHeader;
    /// Offset of the first arrival.
    double phaseMs = 0;
    std::chrono::milliseconds requestTimeout{120000};

    std::string name() const { return profile.name; }
};

/// Throws InvalidPolicy when the bound is not exactly one of the two.
InjectorSpec validateSpec(InjectorSpec s);

/// Send offsets in ms from the run start, phase included.
///   PERIODIC    k / rate
///   STOCHASTIC  exponential gaps with mean 1 / rate (seeded)
///   BURST       burstSize requests at once every burstPeriodS
/// With a duration bound, arrivals at or after the duration are dropped.
std::vector<double> arrivalSchedule(const InjectorSpec& spec);

/// Maps a response to an outcome. No response at all is FAILED.
metrics::Outcome classifyResponse(int status, const HeaderList& headers);

/// A running set of injectors. Results go to the recorder as they arrive.
class ScenarioRun {
public:
    /// Probes every target, then starts all injectors against one origin.
    /// Throws StartupFailed if a target does not accept connections.
    ScenarioRun(std::vector<InjectorSpec> specs, metrics::MetricsRecorder& recorder,
                std::int64_t originNs = monotonicNs());
    ~ScenarioRun();
    ScenarioRun(const ScenarioRun&) = delete;
    ScenarioRun& operator=(const ScenarioRun&) = delete;

    /// Blocks until every injector has sent its schedule and every request
    /// has completed. Records the sent counts and closes the dataset.
    void wait();
    /// Stops issuing new requests, waits for the outstanding ones and marks
    /// the dataset truncated.
    void abort();

    bool aborted() const noexcept { return aborted_; }
    std::int64_t originNs() const noexcept { return originNs_; }
    std::map<std::string, std::uint64_t> sent() const;

private:
    struct Injector;
    void runInjector(Injector& inj, std::stop_token st);
    void sendOne(Injector& inj, std::uint64_t index);
    void finish();

    metrics::MetricsRecorder& recorder_;
    std::int64_t originNs_;
    std::vector<std::unique_ptr<Injector>> injectors_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t inFlight_ = 0;
    std::atomic<bool> aborted_{false};
    std::atomic<bool> finished_{false};
    std::once_flag finishOnce_;
    std::vector<std::jthread> threads_;
};

/// Returns true if something accepts TCP connections at ep.
bool reachable(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::milliseconds{1000});

} // namespace mqos::emulator
