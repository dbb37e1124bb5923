#include "mqos/metrics.hpp"

#include "http_internal.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

namespace mqos::metrics {

std::string_view toString(Outcome o) noexcept {
    switch (o) {
    case Outcome::Served: return "SERVED";
    case Outcome::Rejected: return "REJECTED";
    case Outcome::Overflowed: return "OVERFLOWED";
    case Outcome::Failed: return "FAILED";
    }
    return "FAILED";
}

Outcome parseOutcome(std::string_view s) {
    for (auto o : {Outcome::Served, Outcome::Rejected, Outcome::Overflowed, Outcome::Failed}) {
        if (s == toString(o)) return o;
    }
    throw Error("unknown outcome '" + std::string(s) + "'");
}

// --- statistics -------------------------------------------------------------

double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    auto n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::optional<double> leastSquaresSlope(const std::vector<std::pair<double, double>>& xy) {
    if (xy.size() < 2) return std::nullopt;
    double n = static_cast<double>(xy.size());
    double mx = 0, my = 0;
    for (auto [x, y] : xy) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (auto [x, y] : xy) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if (sxx == 0) return std::nullopt;
    return sxy / sxx;
}

Summary summarize(const Dataset& ds) {
    if (ds.records.empty()) throw EmptyDataset();
    Summary out;
    out.truncated = ds.truncated;

    std::map<std::string, std::vector<const MetricsRecord*>> byInjector;
    for (const auto& r : ds.records) byInjector[r.injector].push_back(&r);

    for (auto& [name, recs] : byInjector) {
        std::sort(recs.begin(), recs.end(),
                  [](auto* a, auto* b) { return a->requestIndex < b->requestIndex; });
        InjectorSummary s;
        s.priority = recs.front()->priority;
        std::vector<double> rtts, overheads;
        for (const auto* r : recs) {
            switch (r->outcome) {
            case Outcome::Served: s.served++; break;
            case Outcome::Rejected: s.rejected++; break;
            case Outcome::Overflowed: s.overflowed++; break;
            case Outcome::Failed: s.failed++; break;
            }
            if (r->outcome == Outcome::Served && r->rttMs) rtts.push_back(*r->rttMs);
            if (r->pepOverheadMs) overheads.push_back(*r->pepOverheadMs);
        }
        auto sentIt = ds.sent.find(name);
        s.sent = sentIt != ds.sent.end() ? sentIt->second : recs.size();
        s.loss = s.sent ? static_cast<double>(s.rejected + s.overflowed + s.failed) / static_cast<double>(s.sent) : 0.0;
        if (!rtts.empty()) {
            RttStats st;
            st.mean = std::accumulate(rtts.begin(), rtts.end(), 0.0) / static_cast<double>(rtts.size());
            st.max = *std::max_element(rtts.begin(), rtts.end());
            st.median = median(rtts);
            s.rtt = st;
        }
        if (!overheads.empty()) s.medianOverheadMs = median(overheads);

        if (auto th = ds.rttThresholdMs.find(name); th != ds.rttThresholdMs.end()) {
            std::vector<std::pair<double, double>> window;
            for (const auto* r : recs) {
                if (r->outcome != Outcome::Served || !r->rttMs) continue;
                if (window.empty() && *r->rttMs <= th->second) continue;
                window.emplace_back(r->timestampMs / 1000.0, *r->rttMs);
            }
            if (!window.empty()) {
                s.firstExceedanceMs = window.front().first * 1000.0;
                s.saturatedSlopeMsPerS = leastSquaresSlope(window);
            }
        }
        out.injectors[name] = s;
    }

    // State time shares over [0, duration].
    if (!ds.states.empty()) {
        auto states = ds.states;
        std::stable_sort(states.begin(), states.end(),
                         [](const auto& a, const auto& b) { return a.timestampMs < b.timestampMs; });
        double end = std::max(ds.durationMs, states.back().timestampMs);
        std::map<std::string, double> time;
        for (std::size_t i = 0; i < states.size(); ++i) {
            double from = std::max(0.0, states[i].timestampMs);
            double to = i + 1 < states.size() ? states[i + 1].timestampMs : end;
            time[std::string(toString(states[i].state))] += std::max(0.0, to - from);
            out.stateSequence.emplace_back(toString(states[i].state));
        }
        double total = 0;
        for (auto& [_, t] : time) total += t;
        for (auto st : {RttState::Normal, RttState::Warning, RttState::Critical}) {
            auto key = std::string(toString(st));
            out.stateShares[key] = total > 0 ? time[key] / total : 0.0;
        }
    }

    std::map<std::string, std::vector<const ResourceSnapshot*>> byComponent;
    for (const auto& r : ds.resources) byComponent[r.component].push_back(&r);
    for (const auto& [name, snaps] : byComponent) {
        ComponentSummary c;
        c.snapshots = snaps.size();
        double cpu = 0;
        std::size_t cpuN = 0;
        for (const auto* s : snaps) {
            if (s->cpuFraction) {
                cpu += *s->cpuFraction;
                cpuN++;
            }
            if (s->rssMb) c.peakRssMb = std::max(c.peakRssMb.value_or(0.0), *s->rssMb);
        }
        if (cpuN) c.meanCpuPercent = 100.0 * cpu / static_cast<double>(cpuN);
        out.components[name] = c;
    }
    return out;
}

Json toJson(const Summary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    Json inj = Json::object();
    for (const auto& [name, i] : s.injectors) {
        Json rtt = nullptr;
        if (i.rtt) rtt = {{"mean_ms", i.rtt->mean}, {"median_ms", i.rtt->median}, {"max_ms", i.rtt->max}};
        inj[name] = {{"priority", std::string(toWire(i.priority))},
                     {"sent", i.sent},
                     {"served", i.served},
                     {"rejected", i.rejected},
                     {"overflowed", i.overflowed},
                     {"failed", i.failed},
                     {"loss", i.loss},
                     {"accounting_closed", i.closed()},
                     {"rtt", rtt},
                     {"median_overhead_ms", opt(i.medianOverheadMs)},
                     {"saturated_slope_ms_per_s", opt(i.saturatedSlopeMsPerS)},
                     {"first_exceedance_ms", opt(i.firstExceedanceMs)}};
    }
    Json comps = Json::object();
    for (const auto& [name, c] : s.components) {
        comps[name] = {{"mean_cpu_percent", opt(c.meanCpuPercent)},
                       {"peak_rss_mb", opt(c.peakRssMb)},
                       {"snapshots", c.snapshots}};
    }
    return Json{{"injectors", inj},
                {"state_shares", s.stateShares},
                {"state_sequence", s.stateSequence},
                {"components", comps},
                {"truncated", s.truncated}};
}

// --- MetricsRecorder --------------------------------------------------------

void MetricsRecorder::setSampleSink(SampleSink sink) {
    std::lock_guard lk(mu_);
    sink_ = std::move(sink);
}

void MetricsRecorder::record(MetricsRecord r, std::int64_t completedAtNs) {
    SampleSink sink;
    std::optional<RttObservation> obs;
    {
        std::lock_guard lk(mu_);
        if (r.outcome == Outcome::Served && r.priority == Priority::High && r.rttMs && sink_) {
            sink = sink_;
            obs = RttObservation{r.injector + "#" + std::to_string(r.requestIndex), r.priority, *r.rttMs,
                                 completedAtNs};
        }
        ds_.records.push_back(std::move(r));
    }
    if (obs) sink(*obs);
}

void MetricsRecorder::recordResource(ResourceSnapshot s) {
    std::lock_guard lk(mu_);
    ds_.resources.push_back(std::move(s));
}

void MetricsRecorder::recordState(StateChange s) {
    std::lock_guard lk(mu_);
    ds_.states.push_back(s);
}

void MetricsRecorder::setSent(const std::string& injector, std::uint64_t n) {
    std::lock_guard lk(mu_);
    ds_.sent[injector] = n;
}

void MetricsRecorder::setThreshold(const std::string& injector, double ms) {
    std::lock_guard lk(mu_);
    ds_.rttThresholdMs[injector] = ms;
}

void MetricsRecorder::finish(double durationMs, bool truncated) {
    std::lock_guard lk(mu_);
    ds_.durationMs = durationMs;
    ds_.truncated = truncated;
}

Dataset MetricsRecorder::dataset() const {
    std::lock_guard lk(mu_);
    return ds_;
}

std::size_t MetricsRecorder::size() const {
    std::lock_guard lk(mu_);
    return ds_.records.size();
}

// --- CSV --------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::ofstream openOut(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

std::vector<std::string> splitCsv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

void writeRequestsCsv(const Dataset& ds, const std::filesystem::path& path,
                      std::optional<std::string> onlyInjector) {
    auto out = openOut(path);
    out << kRequestsSchema << (ds.truncated ? " truncated" : "") << '\n';
    out << "timestamp_ms,injector,request_index,priority,outcome,rtt_ms,pep_overhead_ms\n";
    std::vector<const MetricsRecord*> rows;
    for (const auto& r : ds.records) {
        if (!onlyInjector || r.injector == *onlyInjector) rows.push_back(&r);
    }
    // Records arrive in completion order; rows are written in send order.
    std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) {
        return std::tie(a->timestampMs, a->injector, a->requestIndex) <
               std::tie(b->timestampMs, b->injector, b->requestIndex);
    });
    for (const auto* p : rows) {
        const auto& r = *p;
        out << fmt(r.timestampMs) << ',' << r.injector << ',' << r.requestIndex << ',' << toWire(r.priority)
            << ',' << toString(r.outcome) << ',' << fmt(r.rttMs) << ',' << fmt(r.pepOverheadMs) << '\n';
    }
}

void writeResourcesCsv(const Dataset& ds, const std::filesystem::path& path) {
    auto out = openOut(path);
    out << kResourcesSchema << '\n';
    out << "timestamp_ms,component,cpu_percent,rss_mb\n";
    for (const auto& r : ds.resources) {
        std::optional<double> pct;
        if (r.cpuFraction) pct = *r.cpuFraction * 100.0;
        out << fmt(r.timestampMs) << ',' << r.component << ',' << fmt(pct) << ',' << fmt(r.rssMb) << '\n';
    }
}

void writeStatesCsv(const Dataset& ds, const std::filesystem::path& path) {
    auto out = openOut(path);
    out << kStatesSchema << '\n';
    out << "timestamp_ms,state\n";
    for (const auto& s : ds.states) out << fmt(s.timestampMs) << ',' << toString(s.state) << '\n';
}

std::vector<MetricsRecord> readRequestsCsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || !line.starts_with(kRequestsSchema)) {
        throw Error(path.string() + ": missing schema row");
    }
    std::getline(in, line); // column names
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c = splitCsv(line);
        if (c.size() != 7) throw Error(path.string() + ": bad row '" + line + "'");
        MetricsRecord r;
        r.timestampMs = std::stod(c[0]);
        r.injector = c[1];
        r.requestIndex = std::stoull(c[2]);
        r.priority = parsePriority(c[3]);
        r.outcome = parseOutcome(c[4]);
        if (!c[5].empty()) r.rttMs = std::stod(c[5]);
        if (!c[6].empty()) r.pepOverheadMs = std::stod(c[6]);
        out.push_back(std::move(r));
    }
    return out;
}

// --- resources --------------------------------------------------------------

ProcessProbe::ProcessProbe(int pid) : pid_(pid) {}

ResourceSnapshot ProcessProbe::sample(const std::string& component, double timestampMs) {
    ResourceSnapshot snap;
    snap.component = component;
    snap.timestampMs = timestampMs;
    auto base = std::filesystem::path("/proc") / (pid_ == 0 ? std::string("self") : std::to_string(pid_));

    static const long ticks = sysconf(_SC_CLK_TCK);
    static const long pageSize = sysconf(_SC_PAGESIZE);

    std::ifstream stat(base / "stat");
    std::string content;
    if (stat && std::getline(stat, content)) {
        // Fields after the parenthesised command name; utime and stime are
        // fields 14 and 15 of the full line.
        auto close = content.rfind(')');
        if (close != std::string::npos && ticks > 0) {
            std::istringstream rest(content.substr(close + 2));
            std::vector<std::string> f;
            std::string tok;
            while (rest >> tok) f.push_back(tok);
            if (f.size() > 12) {
                double cpuS = (std::stod(f[11]) + std::stod(f[12])) / static_cast<double>(ticks);
                auto now = monotonicNs();
                if (lastCpuS_ && lastWallNs_ && now > *lastWallNs_) {
                    snap.cpuFraction = (cpuS - *lastCpuS_) / (static_cast<double>(now - *lastWallNs_) / 1e9);
                }
                lastCpuS_ = cpuS;
                lastWallNs_ = now;
            }
        }
    }
    std::ifstream statm(base / "statm");
    long size = 0, resident = 0;
    if (statm >> size >> resident && pageSize > 0) {
        snap.rssMb = static_cast<double>(resident) * static_cast<double>(pageSize) / (1024.0 * 1024.0);
    }
    return snap;
}

ResourceSampler::ResourceSampler(std::vector<ComponentHandle> components, std::chrono::milliseconds interval,
                                 std::function<void(ResourceSnapshot)> sink, std::int64_t originNs)
    : thread_([components = std::move(components), interval, sink = std::move(sink),
               originNs](std::stop_token st) {
          std::vector<ProcessProbe> probes;
          for (const auto& c : components) probes.emplace_back(c.pid);
          std::mutex m;
          std::condition_variable_any cv;
          auto next = std::chrono::steady_clock::now();
          // Prime the CPU counters so the first emitted snapshot has a rate.
          for (std::size_t i = 0; i < probes.size(); ++i) probes[i].sample(components[i].name, 0);
          while (!st.stop_requested()) {
              next += interval;
              {
                  std::unique_lock lk(m);
                  if (cv.wait_until(lk, st, next, [] { return false; }), st.stop_requested()) break;
              }
              double t = static_cast<double>(monotonicNs() - originNs) / 1e6;
              for (std::size_t i = 0; i < probes.size(); ++i) sink(probes[i].sample(components[i].name, t));
          }
      }) {}

ResourceSampler::~ResourceSampler() { stop(); }

void ResourceSampler::stop() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
}

// --- live summary -----------------------------------------------------------

SummaryEndpoint::SummaryEndpoint(const MetricsRecorder& recorder) : recorder_(recorder), http_(4) {
    http_.routes().Get("/admin/metrics/summary", [this](const httplib::Request&, httplib::Response& res) {
        try {
            detail::replyJson(res, toJson(summarize(recorder_.dataset())));
        } catch (const EmptyDataset& e) {
            detail::replyError(res, 404, e.what());
        }
    });
}

} // namespace mqos::metrics
