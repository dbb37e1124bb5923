#include "mqos/scenario.hpp"

#include "mqos/autonomic.hpp"
#include "mqos/cmc.hpp"
#include "mqos/emulator.hpp"

#include <fstream>
#include <memory>
#include <sstream>

namespace mqos::scenario {

std::string_view toString(Mode m) noexcept { return m == Mode::Baseline ? "baseline" : "managed"; }

Mode parseMode(std::string_view s) {
    if (s == "baseline" || s == "BASELINE") return Mode::Baseline;
    if (s == "managed" || s == "MANAGED") return Mode::Managed;
    throw InvalidScenario("unknown mode '" + std::string(s) + "' (baseline|managed)");
}

// --- parsing ----------------------------------------------------------------

namespace {

std::pair<std::size_t, std::size_t> lineCol(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            line++;
            col = 1;
        } else {
            col++;
        }
    }
    return {line, col};
}

// Runs fn, prefixing any error with the key being decoded.
template <class F>
auto at(const std::string& origin, const std::string& key, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const InvalidScenario&) {
        throw;
    } catch (const std::exception& e) {
        throw InvalidScenario(origin + ": " + key + ": " + e.what());
    }
}

Assertion parseAssertion(const Json& j) {
    Assertion a;
    a.kind = j.at("kind").get<std::string>();
    static const std::vector<std::string> kinds = {
        "mean_rtt_below", "median_rtt_below", "max_rtt_below", "max_rtt_above",    "rtt_slope_positive",
        "loss_below",     "loss_above",       "median_overhead_below", "state_cycle", "accounting_closed"};
    if (std::find(kinds.begin(), kinds.end(), a.kind) == kinds.end()) {
        throw InvalidScenario("unknown assertion kind '" + a.kind + "'");
    }
    a.injector = j.value("injector", std::string());
    if (j.contains("ms")) a.value = j.at("ms").get<double>();
    if (j.contains("value")) a.value = j.at("value").get<double>();
    for (const auto& s : j.value("states", Json::array())) a.states.push_back(parseRttState(s.get<std::string>()));
    if (j.contains("mode")) a.mode = parseMode(j.at("mode").get<std::string>());
    bool needsInjector = a.kind.find("rtt") != std::string::npos || a.kind.starts_with("loss");
    if (needsInjector && a.injector.empty()) throw InvalidScenario("assertion " + a.kind + " needs an injector");
    if (a.kind == "state_cycle" && a.states.empty()) throw InvalidScenario("state_cycle needs states");
    return a;
}

} // namespace

Scenario parseScenario(const std::string& text, const std::string& origin) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        auto [line, col] = lineCol(text, e.byte);
        std::string what = e.what();
        // Drop nlohmann's "[json.exception.parse_error.101] parse error at line x, column y: " prefix.
        if (auto p = what.find(": "); p != std::string::npos) what = what.substr(p + 2);
        throw InvalidScenario(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
    }
    if (!doc.is_object()) throw InvalidScenario(origin + ":1:1: scenario must be a JSON object");

    Scenario sc;
    at(origin, "name", [&] { sc.name = doc.value("name", sc.name); });
    at(origin, "duration_s", [&] {
        sc.durationS = doc.value("duration_s", sc.durationS);
        if (!(sc.durationS > 0)) throw InvalidScenario(origin + ": duration_s must be > 0");
    });
    at(origin, "seed", [&] { sc.seed = doc.value("seed", sc.seed); });

    at(origin, "gateway", [&] {
        if (!doc.contains("gateway")) return;
        const auto& g = doc.at("gateway");
        auto& c = sc.gateway.config;
        sc.gateway.instances = g.value("instances", 1);
        c.serviceTime = std::chrono::milliseconds(g.value("service_time_ms", c.serviceTime.count()));
        c.jitter = std::chrono::milliseconds(g.value("jitter_ms", c.jitter.count()));
        c.workers = g.value("workers", c.workers);
        c.acceptQueueCapacity = g.value("accept_queue", c.acceptQueueCapacity);
        if (sc.gateway.instances < 1) throw InvalidPolicy("instances", "need at least one gateway");
        gateway::validateConfig(c);
    });

    at(origin, "balancer", [&] {
        if (!doc.contains("balancer") || doc.at("balancer").is_null()) return;
        const auto& b = doc.at("balancer");
        BalancerSpec spec;
        spec.strategy = cluster::parseStrategy(b.value("strategy", std::string("ROUND_ROBIN")));
        spec.weights = b.value("weights", std::vector<int>{});
        if (!spec.weights.empty() && spec.weights.size() != static_cast<std::size_t>(sc.gateway.instances)) {
            throw InvalidPolicy("weights", "need one weight per gateway instance");
        }
        for (int w : spec.weights) {
            if (w < 1) throw InvalidPolicy("weights", "weights must be >= 1");
        }
        sc.balancer = spec;
    });

    at(origin, "cmc", [&] {
        if (doc.contains("cmc")) sc.cmc = decode<CmcPolicy>(doc.at("cmc"));
    });

    at(origin, "pep", [&] {
        if (!doc.contains("pep")) return;
        const auto& p = doc.at("pep");
        if (p.contains("policy")) sc.pep.policy = decodePepPolicy(p.at("policy"));
        sc.pep.rejectionMode = pep::parseRejectionMode(p.value("rejection_mode", std::string("DETERMINISTIC")));
        sc.pep.queueCapacity = p.value("queue_capacity", sc.pep.queueCapacity);
        sc.pep.forwarderSlots = p.value("forwarder_slots", sc.pep.forwarderSlots);
        sc.pep.delayCapacity = p.value("delay_capacity", sc.pep.delayCapacity);
    });

    at(origin, "autonomic", [&] {
        if (!doc.contains("autonomic")) return;
        const auto& a = doc.at("autonomic");
        sc.autonomic.enabled = a.value("enabled", true);
        if (a.contains("rules")) sc.autonomic.rules = decodeAdaptationRules(a.at("rules"));
        sc.autonomic.enterK = a.value("enter_k", sc.autonomic.enterK);
        sc.autonomic.recoverN = a.value("recover_n", sc.autonomic.recoverN);
        if (sc.autonomic.enterK < 1 || sc.autonomic.recoverN < 1) {
            throw InvalidPolicy("enter_k/recover_n", "streak lengths must be >= 1");
        }
    });

    at(origin, "resource_interval_ms", [&] {
        sc.resourceInterval = std::chrono::milliseconds(doc.value("resource_interval_ms", 1000));
        if (sc.resourceInterval.count() <= 0) throw InvalidPolicy("resource_interval_ms", "must be > 0");
    });

    at(origin, "injectors", [&] {
        if (!doc.contains("injectors")) return;
        std::size_t i = 0;
        for (const auto& j : doc.at("injectors")) {
            at(origin, "injectors[" + std::to_string(i++) + "]", [&] {
                InjectorEntry e;
                e.profile = decodeProfile(j.at("profile"));
                e.path = j.value("path", "/" + e.profile.name + "/data");
                e.phaseMs = j.value("phase_ms", 0.0);
                if (j.contains("total_requests")) e.totalRequests = j.at("total_requests").get<std::uint64_t>();
                if (j.contains("duration_s")) e.durationS = j.at("duration_s").get<double>();
                if (j.contains("seed")) e.seed = j.at("seed").get<std::uint64_t>();
                if (e.totalRequests && e.durationS) {
                    throw InvalidPolicy("bound", "set total_requests or duration_s, not both");
                }
                for (const auto& other : sc.injectors) {
                    if (other.profile.name == e.profile.name) {
                        throw InvalidPolicy("profile.name", "duplicate injector '" + e.profile.name + "'");
                    }
                }
                sc.injectors.push_back(std::move(e));
            });
        }
    });

    at(origin, "assertions", [&] {
        if (!doc.contains("assertions")) return;
        std::size_t i = 0;
        for (const auto& j : doc.at("assertions")) {
            at(origin, "assertions[" + std::to_string(i++) + "]", [&] { sc.assertions.push_back(parseAssertion(j)); });
        }
    });
    for (const auto& a : sc.assertions) {
        if (a.injector.empty()) continue;
        bool known = std::any_of(sc.injectors.begin(), sc.injectors.end(),
                                 [&](const auto& e) { return e.profile.name == a.injector; });
        if (!known) throw InvalidScenario(origin + ": assertion " + a.kind + " names unknown injector '" + a.injector + "'");
    }
    return sc;
}

Scenario loadScenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidScenario("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parseScenario(ss.str(), path.string());
}

// --- assertions -------------------------------------------------------------

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

std::string joinStates(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ">") + s;
    return out.empty() ? "(none)" : out;
}

} // namespace

AssertionResult evaluate(const Assertion& a, const metrics::Summary& summary, const metrics::Dataset& ds) {
    AssertionResult r;
    r.description = a.kind + (a.injector.empty() ? "" : " " + a.injector);
    const metrics::InjectorSummary* inj = nullptr;
    if (!a.injector.empty()) {
        auto it = summary.injectors.find(a.injector);
        if (it == summary.injectors.end()) {
            r.detail = "no records for injector";
            return r;
        }
        inj = &it->second;
    }

    auto rttCheck = [&](double metrics::RttStats::*field, bool below) {
        r.description += (below ? " < " : " > ") + num(a.value) + " ms";
        if (!inj->rtt) {
            r.detail = "no served requests";
            return;
        }
        double v = inj->rtt.value().*field;
        r.passed = below ? v < a.value : v > a.value;
        r.detail = "observed " + num(v) + " ms";
    };

    if (a.kind == "mean_rtt_below") {
        rttCheck(&metrics::RttStats::mean, true);
    } else if (a.kind == "median_rtt_below") {
        rttCheck(&metrics::RttStats::median, true);
    } else if (a.kind == "max_rtt_below") {
        rttCheck(&metrics::RttStats::max, true);
    } else if (a.kind == "max_rtt_above") {
        rttCheck(&metrics::RttStats::max, false);
    } else if (a.kind == "rtt_slope_positive") {
        if (!inj->saturatedSlopeMsPerS) {
            r.detail = "RTT never exceeded the injector threshold";
        } else {
            r.passed = *inj->saturatedSlopeMsPerS > 0;
            r.detail = "slope " + num(*inj->saturatedSlopeMsPerS) + " ms/s from t=" +
                       num(inj->firstExceedanceMs.value_or(0) / 1000.0) + " s";
        }
    } else if (a.kind == "loss_below" || a.kind == "loss_above") {
        bool below = a.kind == "loss_below";
        r.description += (below ? " < " : " > ") + num(a.value * 100) + "%";
        r.passed = below ? inj->loss < a.value : inj->loss > a.value;
        r.detail = "observed " + num(inj->loss * 100) + "%";
    } else if (a.kind == "median_overhead_below") {
        r.description += " < " + num(a.value) + " ms";
        std::vector<double> v;
        for (const auto& rec : ds.records) {
            if (rec.pepOverheadMs) v.push_back(*rec.pepOverheadMs);
        }
        if (v.empty()) {
            r.detail = "no overhead measurements";
        } else {
            double m = metrics::median(v);
            r.passed = m < a.value;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.3f", m);
            r.detail = "observed " + std::string(buf) + " ms over " + std::to_string(v.size()) + " requests";
        }
    } else if (a.kind == "state_cycle") {
        std::vector<std::string> want;
        for (auto s : a.states) want.emplace_back(toString(s));
        r.description += " " + joinStates(want);
        // Subsequence match over the logged state sequence.
        std::size_t k = 0;
        for (const auto& s : summary.stateSequence) {
            if (k < want.size() && s == want[k]) k++;
        }
        r.passed = k == want.size();
        r.detail = "logged " + joinStates(summary.stateSequence);
    } else if (a.kind == "accounting_closed") {
        r.passed = true;
        std::string bad;
        for (const auto& [name, s] : summary.injectors) {
            if (!s.closed()) {
                r.passed = false;
                bad += " " + name;
            }
        }
        for (const auto& [name, n] : ds.sent) {
            if (n > 0 && !summary.injectors.count(name)) {
                r.passed = false;
                bad += " " + name;
            }
        }
        r.detail = r.passed ? "sent = served + rejected + overflowed + failed for every injector"
                            : "unbalanced:" + bad;
    }
    return r;
}

// --- runner -----------------------------------------------------------------

namespace {

// Components in one place so teardown order is explicit.
struct Topology {
    std::vector<std::unique_ptr<gateway::Gateway>> gateways;
    std::unique_ptr<cluster::BalancerServer> balancer;
    std::unique_ptr<pep::PepServer> pep;
    std::unique_ptr<cmc::CmcServer> cmc;
    std::unique_ptr<autonomic::AutonomicManager> am;

    Endpoint upstream() const {
        return balancer ? balancer->endpoint() : gateways.front()->endpoint();
    }

    void shutdown() {
        if (am) am->stop();
        if (cmc) cmc->stop();
        if (pep) pep->stop();
        if (balancer) balancer->stop();
        for (auto& g : gateways) g->stop();
    }
};

template <class F>
void starting(const std::string& what, F&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        throw ComponentStartupFailed(what + ": " + e.what());
    }
}

} // namespace

RunResult runScenario(const Scenario& sc, const RunOptions& opts) {
    const auto seed = opts.seed.value_or(sc.seed);
    const bool managed = opts.mode == Mode::Managed;
    if (!opts.outDir.empty()) std::filesystem::create_directories(opts.outDir);

    Topology topo;
    for (int i = 0; i < sc.gateway.instances; ++i) {
        starting("gateway " + std::to_string(i), [&] {
            auto cfg = sc.gateway.config;
            cfg.seed = seed + static_cast<std::uint64_t>(i);
            topo.gateways.push_back(std::make_unique<gateway::Gateway>(cfg));
            topo.gateways.back()->start();
        });
    }
    if (sc.balancer) {
        starting("balancer", [&] {
            cluster::BalancerConfig cfg;
            cfg.strategy = sc.balancer->strategy;
            for (std::size_t i = 0; i < topo.gateways.size(); ++i) {
                int w = sc.balancer->weights.empty() ? 1 : sc.balancer->weights[i];
                cfg.instances.push_back({topo.gateways[i]->endpoint(), w});
            }
            cfg.threads = std::max<std::size_t>(256, sc.gateway.config.acceptQueueCapacity + 64);
            topo.balancer = std::make_unique<cluster::BalancerServer>(cfg);
            topo.balancer->start();
        });
    }

    metrics::MetricsRecorder recorder;
    Endpoint target = topo.upstream();
    if (managed) {
        starting("pep", [&] {
            pep::PepConfig cfg;
            cfg.upstream = topo.upstream();
            cfg.policy = sc.pep.policy;
            cfg.rejectionMode = sc.pep.rejectionMode;
            cfg.seed = seed;
            cfg.queueCapacity = sc.pep.queueCapacity;
            cfg.forwarderSlots = sc.pep.forwarderSlots;
            cfg.delayCapacity = sc.pep.delayCapacity;
            cfg.threads = std::max<std::size_t>(256, sc.pep.queueCapacity + 64);
            topo.pep = std::make_unique<pep::PepServer>(cfg);
            topo.pep->start();
        });
        starting("cmc", [&] {
            cmc::CmcState st;
            st.policy = sc.cmc;
            st.pep = topo.pep->endpoint();
            st.gateway = topo.upstream();
            topo.cmc = std::make_unique<cmc::CmcServer>(st, std::max<std::size_t>(256, sc.pep.queueCapacity + 64));
            topo.cmc->start();
        });
        if (sc.autonomic.enabled) {
            starting("autonomic manager", [&] {
                autonomic::ManagerConfig cfg;
                cfg.rules = sc.autonomic.rules;
                cfg.enterK = sc.autonomic.enterK;
                cfg.recoverN = sc.autonomic.recoverN;
                cfg.baseline = sc.pep.policy;
                cfg.pepAdmin = topo.pep->endpoint();
                if (!opts.outDir.empty()) cfg.knowledgeLogPath = (opts.outDir / "knowledge.log").string();
                topo.am = std::make_unique<autonomic::AutonomicManager>(cfg);
                topo.am->start();
            });
            recorder.setSampleSink([am = topo.am.get()](const metrics::RttObservation& o) {
                am->submit({o.requestId, o.priority, o.rttMs, o.completedAtNs});
            });
        }
        target = topo.cmc->endpoint();
    }

    std::vector<emulator::InjectorSpec> specs;
    for (std::size_t i = 0; i < sc.injectors.size(); ++i) {
        const auto& e = sc.injectors[i];
        emulator::InjectorSpec s;
        s.profile = e.profile;
        s.target = target;
        s.path = e.path;
        s.phaseMs = e.phaseMs;
        s.seed = e.seed.value_or(seed + i);
        if (opts.durationS) {
            s.durationS = opts.durationS;
        } else if (e.totalRequests) {
            s.totalRequests = e.totalRequests;
        } else {
            s.durationS = e.durationS.value_or(sc.durationS);
        }
        specs.push_back(std::move(s));
    }

    const auto origin = monotonicNs();
    std::optional<metrics::ResourceSampler> sampler;
    sampler.emplace(std::vector<metrics::ComponentHandle>{{"process", 0}}, sc.resourceInterval,
                    [&recorder](metrics::ResourceSnapshot s) { recorder.recordResource(std::move(s)); }, origin);
    if (topo.am) recorder.recordState({0.0, RttState::Normal});

    std::optional<emulator::ScenarioRun> run;
    try {
        run.emplace(std::move(specs), recorder, origin);
    } catch (const emulator::StartupFailed& e) {
        sampler.reset();
        topo.shutdown();
        throw ComponentStartupFailed(e.what());
    } catch (const InvalidPolicy& e) {
        sampler.reset();
        topo.shutdown();
        throw InvalidScenario(e.what());
    }
    run->wait();
    sampler.reset();

    RunResult result;
    result.mode = opts.mode;
    if (topo.am) {
        topo.am->flush();
        for (const auto& t : topo.am->transitions()) {
            recorder.recordState({static_cast<double>(t.atNs - origin) / 1e6, t.to});
        }
        result.components["autonomic"] = topo.am->stateJson();
    }
    if (topo.pep) result.components["pep"] = topo.pep->statsJson();
    if (topo.balancer) result.components["balancer"] = topo.balancer->statsJson();
    for (std::size_t i = 0; i < topo.gateways.size(); ++i) {
        result.components["gateway" + std::to_string(i)] = topo.gateways[i]->statsJson();
    }
    topo.shutdown();

    result.dataset = recorder.dataset();
    if (result.dataset.records.empty()) {
        result.passed = false;
        result.assertions.push_back({"records", false, "the run produced no records"});
        return result;
    }
    result.summary = metrics::summarize(result.dataset);

    std::vector<Assertion> assertions = sc.assertions;
    if (std::none_of(assertions.begin(), assertions.end(), [](const auto& a) { return a.kind == "accounting_closed"; })) {
        assertions.push_back({"accounting_closed", "", 0, {}, std::nullopt});
    }
    result.passed = true;
    for (const auto& a : assertions) {
        if (a.mode && *a.mode != opts.mode) continue;
        result.assertions.push_back(evaluate(a, result.summary, result.dataset));
        result.passed = result.passed && result.assertions.back().passed;
    }

    if (!opts.outDir.empty()) {
        const auto& ds = result.dataset;
        metrics::writeRequestsCsv(ds, opts.outDir / "requests.csv");
        for (const auto& [name, _] : result.summary.injectors) {
            metrics::writeRequestsCsv(ds, opts.outDir / ("injector-" + name + ".csv"), name);
        }
        metrics::writeResourcesCsv(ds, opts.outDir / "resources.csv");
        metrics::writeStatesCsv(ds, opts.outDir / "states.csv");
        std::ofstream(opts.outDir / "summary.json") << toJson(result).dump(2) << '\n';
    }
    return result;
}

Json toJson(const RunResult& r) {
    Json as = Json::array();
    for (const auto& a : r.assertions) {
        as.push_back({{"assertion", a.description}, {"passed", a.passed}, {"detail", a.detail}});
    }
    return Json{{"mode", std::string(toString(r.mode))},
                {"passed", r.passed},
                {"assertions", as},
                {"summary", r.dataset.records.empty() ? Json(nullptr) : metrics::toJson(r.summary)},
                {"components", r.components}};
}

} // namespace mqos::scenario
