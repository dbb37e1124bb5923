#include "mqos/emulator.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>

#include <cmath>
#include <random>

namespace mqos::emulator {

InjectorSpec validateSpec(InjectorSpec s) {
    s.profile = validateProfile(std::move(s.profile));
    if (s.totalRequests.has_value() == s.durationS.has_value()) {
        throw InvalidPolicy("bound", "exactly one of total_requests and duration_s must be set");
    }
    if (s.durationS && !(*s.durationS > 0)) throw InvalidPolicy("duration_s", "duration must be > 0");
    if (s.phaseMs < 0) throw InvalidPolicy("phase_ms", "phase must be >= 0");
    if (s.sourceHeader.empty()) s.sourceHeader = s.profile.name;
    if (s.path.empty() || s.path.front() != '/') throw InvalidPolicy("path", "path must start with '/'");
    return s;
}

std::vector<double> arrivalSchedule(const InjectorSpec& spec) {
    const auto& p = spec.profile;
    const double limitMs = spec.durationS ? *spec.durationS * 1000.0 : INFINITY;
    const std::uint64_t limitN = spec.totalRequests.value_or(UINT64_MAX);
    std::vector<double> out;
    auto full = [&](double t) { return out.size() >= limitN || t >= limitMs; };

    switch (p.arrival) {
    case ArrivalModel::Periodic: {
        const double gap = 1000.0 / p.rate;
        for (std::uint64_t k = 0;; ++k) {
            double t = static_cast<double>(k) * gap;
            if (full(t)) break;
            out.push_back(t);
        }
        break;
    }
    case ArrivalModel::Stochastic: {
        std::mt19937_64 rng(spec.seed);
        std::exponential_distribution<double> gap(p.rate / 1000.0);
        // The first arrival comes at t = 0 like the other models; gaps follow.
        for (double t = 0; !full(t); t += gap(rng)) out.push_back(t);
        break;
    }
    case ArrivalModel::Burst: {
        const double period = p.burstPeriodS * 1000.0;
        for (std::uint64_t b = 0;; ++b) {
            double t = static_cast<double>(b) * period;
            if (full(t)) break;
            for (int i = 0; i < p.burstSize && !full(t); ++i) out.push_back(t);
        }
        break;
    }
    }
    for (auto& t : out) t += spec.phaseMs;
    return out;
}

metrics::Outcome classifyResponse(int status, const HeaderList& headers) {
    using metrics::Outcome;
    if (status >= 200 && status < 300) return Outcome::Served;
    auto find = [&](std::string_view name) -> std::string {
        for (const auto& [k, v] : headers) {
            if (iequals(k, name)) return v;
        }
        return {};
    };
    auto pep = find(headers::kPepAction);
    if (pep == "rejected") return Outcome::Rejected;
    if (pep == "queue-overflow" || pep == "delay-overflow") return Outcome::Overflowed;
    if (find(headers::kGwAction) == "overflow") return Outcome::Overflowed;
    return Outcome::Failed;
}

bool reachable(const Endpoint& ep, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) != 0) return false;
    bool ok = false;
    for (auto* ai = res; ai && !ok; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_NONBLOCK, ai->ai_protocol);
        if (fd < 0) continue;
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc == 0) {
            ok = true;
        } else if (errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            if (::poll(&pfd, 1, static_cast<int>(timeout.count())) == 1) {
                int err = 0;
                socklen_t len = sizeof err;
                ok = ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) == 0 && err == 0;
            }
        }
        ::close(fd);
    }
    freeaddrinfo(res);
    return ok;
}

// --- ScenarioRun ------------------------------------------------------------

struct ScenarioRun::Injector {
    InjectorSpec spec;
    std::vector<double> schedule;
    std::atomic<std::uint64_t> sent{0};
};

ScenarioRun::ScenarioRun(std::vector<InjectorSpec> specs, metrics::MetricsRecorder& recorder,
                         std::int64_t originNs)
    : recorder_(recorder), originNs_(originNs) {
    for (auto& s : specs) {
        auto inj = std::make_unique<Injector>();
        inj->spec = validateSpec(std::move(s));
        if (!reachable(inj->spec.target)) {
            throw StartupFailed("injector " + inj->spec.name() + ": target " + inj->spec.target.str() +
                                " is not reachable");
        }
        inj->schedule = arrivalSchedule(inj->spec);
        if (inj->spec.profile.acceptableRttMs) {
            recorder_.setThreshold(inj->spec.name(), *inj->spec.profile.acceptableRttMs);
        }
        injectors_.push_back(std::move(inj));
    }
    for (auto& inj : injectors_) {
        threads_.emplace_back([this, i = inj.get()](std::stop_token st) { runInjector(*i, st); });
    }
}

ScenarioRun::~ScenarioRun() {
    if (!finished_) abort();
}

void ScenarioRun::runInjector(Injector& inj, std::stop_token st) {
    std::mutex m;
    std::condition_variable_any cv;
    const auto origin = std::chrono::steady_clock::time_point(std::chrono::nanoseconds(originNs_));
    for (std::size_t k = 0; k < inj.schedule.size(); ++k) {
        auto due = origin + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                std::chrono::duration<double, std::milli>(inj.schedule[k]));
        {
            std::unique_lock lk(m);
            cv.wait_until(lk, st, due, [] { return false; });
        }
        if (st.stop_requested()) return;
        inj.sent.fetch_add(1);
        {
            std::lock_guard lk(mu_);
            inFlight_++;
        }
        // Open loop: each request gets its own thread so a slow response
        // never delays the next send.
        std::thread([this, &inj, k] { sendOne(inj, k); }).detach();
    }
}

void ScenarioRun::sendOne(Injector& inj, std::uint64_t index) {
    const auto& spec = inj.spec;
    metrics::MetricsRecord rec;
    rec.injector = spec.name();
    rec.requestIndex = index;
    rec.priority = spec.profile.priorityHint;

    httplib::Client cli(spec.target.host, spec.target.port);
    cli.set_keep_alive(false);
    cli.set_connection_timeout(std::chrono::seconds(5));
    cli.set_read_timeout(spec.requestTimeout);
    cli.set_write_timeout(std::chrono::seconds(5));
    httplib::Headers hdrs{{std::string(headers::kSourceId), spec.sourceHeader}};
    std::string body = R"({"application":")" + spec.name() + R"(","seq":)" + std::to_string(index) + "}";

    auto t0 = monotonicNs();
    auto res = cli.Post(spec.path, hdrs, body, "application/json");
    auto t1 = monotonicNs();

    rec.timestampMs = static_cast<double>(t0 - originNs_) / 1e6;
    if (!res) {
        rec.outcome = metrics::Outcome::Failed;
    } else {
        HeaderList hl(res->headers.begin(), res->headers.end());
        rec.outcome = classifyResponse(res->status, hl);
        if (rec.outcome == metrics::Outcome::Served) rec.rttMs = static_cast<double>(t1 - t0) / 1e6;
        if (res->has_header(std::string(headers::kOverheadUs))) {
            try {
                rec.pepOverheadMs = std::stod(res->get_header_value(std::string(headers::kOverheadUs))) / 1000.0;
            } catch (const std::exception&) {
            }
        }
    }
    recorder_.record(std::move(rec), t1);

    {
        std::lock_guard lk(mu_);
        inFlight_--;
    }
    cv_.notify_all();
}

void ScenarioRun::finish() {
    // wait() and abort() may race from different threads; the first caller
    // does the joining and the other blocks until it is done.
    std::call_once(finishOnce_, [this] {
        for (auto& t : threads_) {
            if (t.joinable()) t.join();
        }
        {
            std::unique_lock lk(mu_);
            cv_.wait(lk, [&] { return inFlight_ == 0; });
        }
        for (const auto& inj : injectors_) recorder_.setSent(inj->spec.name(), inj->sent.load());
        recorder_.finish(static_cast<double>(monotonicNs() - originNs_) / 1e6, aborted_);
        finished_ = true;
    });
}

void ScenarioRun::wait() { finish(); }

void ScenarioRun::abort() {
    aborted_ = true;
    for (auto& t : threads_) t.request_stop();
    finish();
}

std::map<std::string, std::uint64_t> ScenarioRun::sent() const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& inj : injectors_) out[inj->spec.name()] = inj->sent.load();
    return out;
}

} // namespace mqos::emulator
