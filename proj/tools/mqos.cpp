// mqos: scenario runner and standalone component launcher.

#include "mqos/autonomic.hpp"
#include "mqos/cluster.hpp"
#include "mqos/cmc.hpp"
#include "mqos/emulator.hpp"
#include "mqos/gateway.hpp"
#include "mqos/metrics.hpp"
#include "mqos/pep.hpp"
#include "mqos/scenario.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace mqos;

namespace {

Json readJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(path + ": " + e.what());
    }
}

// Blocks until SIGINT or SIGTERM.
void waitForSignal() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
}

void blockSignals() {
    // Every thread inherits this mask, so only sigwait() sees the signals.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

void announce(const std::string& what, const Endpoint& ep) {
    std::cout << what << " listening on " << ep.str() << std::endl;
}

int runScenarioCmd(const std::string& path, const std::string& mode, const std::string& out,
                   std::optional<std::uint64_t> seed, std::optional<double> duration) {
    auto sc = scenario::loadScenario(path);
    scenario::RunOptions opts;
    opts.mode = scenario::parseMode(mode);
    opts.outDir = out;
    opts.seed = seed;
    opts.durationS = duration;
    std::cout << "scenario " << sc.name << " (" << scenario::toString(opts.mode) << ")" << std::endl;
    auto res = scenario::runScenario(sc, opts);
    for (const auto& [name, s] : res.summary.injectors) {
        std::cout << "  " << name << ": sent " << s.sent << ", served " << s.served << ", rejected " << s.rejected
                  << ", overflowed " << s.overflowed << ", failed " << s.failed;
        if (s.rtt) std::cout << ", rtt mean " << s.rtt->mean << " ms, max " << s.rtt->max << " ms";
        std::cout << '\n';
    }
    if (!res.summary.stateSequence.empty()) {
        std::cout << "  states:";
        for (const auto& s : res.summary.stateSequence) std::cout << ' ' << s;
        std::cout << '\n';
    }
    for (const auto& a : res.assertions) {
        std::cout << (a.passed ? "PASS " : "FAIL ") << a.description << " (" << a.detail << ")\n";
    }
    if (!out.empty()) std::cout << "results in " << out << '\n';
    return res.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Middleware QoS toolkit: classification, differentiation and autonomic control"};
    app.require_subcommand(1);

    std::string host = "127.0.0.1";
    int port = 0;
    auto addListen = [&](CLI::App* cmd) {
        cmd->add_option("--host", host, "Listen address")->capture_default_str();
        cmd->add_option("--port", port, "Listen port (0 picks one)")->capture_default_str();
    };

    // run
    auto* run = app.add_subcommand("run", "Run a scenario file");
    std::string scenarioPath, mode = "managed", outDir;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    run->add_option("--scenario", scenarioPath, "Scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--mode", mode, "baseline|managed")->check(CLI::IsMember({"baseline", "managed"}))
        ->capture_default_str();
    run->add_option("--out", outDir, "Output directory");
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--duration", duration, "Override every injector bound with this many seconds");

    // run-gateway
    auto* gw = app.add_subcommand("run-gateway", "Run the gateway stub");
    addListen(gw);
    gateway::GatewayConfig gwCfg;
    int serviceMs = 100, jitterMs = 0;
    gw->add_option("--workers", gwCfg.workers)->capture_default_str();
    gw->add_option("--service-ms", serviceMs)->capture_default_str();
    gw->add_option("--jitter-ms", jitterMs)->capture_default_str();
    gw->add_option("--accept-queue", gwCfg.acceptQueueCapacity)->capture_default_str();
    gw->add_option("--seed", gwCfg.seed)->capture_default_str();

    // run-cmc
    auto* cm = app.add_subcommand("run-cmc", "Run the classification and marking component");
    addListen(cm);
    std::string cmcPolicy, cmcPep, cmcGateway;
    bool cmcOff = false;
    cm->add_option("--policy", cmcPolicy, "CMC policy JSON file")->check(CLI::ExistingFile);
    cm->add_option("--pep", cmcPep, "Next hop when activated (host:port)")->required();
    cm->add_option("--gateway", cmcGateway, "Next hop when deactivated (host:port)")->required();
    cm->add_flag("--deactivated", cmcOff, "Start with classification off");

    // run-pep
    auto* pp = app.add_subcommand("run-pep", "Run the performance enhancing proxy");
    addListen(pp);
    std::string pepUpstream, pepPolicy, pepMode = "DETERMINISTIC";
    pep::PepConfig pepCfg;
    pp->add_option("--upstream", pepUpstream, "Gateway or balancer (host:port)")->required();
    pp->add_option("--policy", pepPolicy, "PEP policy JSON file")->check(CLI::ExistingFile);
    pp->add_option("--rejection-mode", pepMode)->check(CLI::IsMember({"DETERMINISTIC", "PROBABILISTIC"}))
        ->capture_default_str();
    pp->add_option("--seed", pepCfg.seed)->capture_default_str();
    pp->add_option("--slots", pepCfg.forwarderSlots, "Forwarder concurrency under SCHEDULE")->capture_default_str();
    pp->add_option("--queue-capacity", pepCfg.queueCapacity)->capture_default_str();

    // run-balancer
    auto* lb = app.add_subcommand("run-balancer", "Run the load balancer");
    addListen(lb);
    std::vector<std::string> lbInstances;
    std::string lbStrategy = "ROUND_ROBIN";
    lb->add_option("--instance", lbInstances, "host:port[@weight], repeatable")->required();
    lb->add_option("--strategy", lbStrategy)
        ->check(CLI::IsMember({"ROUND_ROBIN", "WEIGHTED_ROUND_ROBIN", "LOAD_ORIENTED"}))
        ->capture_default_str();

    // run-am
    auto* am = app.add_subcommand("run-am", "Run the autonomic manager");
    addListen(am);
    std::string amPep, amRules, amLog;
    autonomic::ManagerConfig amCfg;
    am->add_option("--pep", amPep, "PEP admin endpoint (host:port)");
    am->add_option("--rules", amRules, "Adaptation rules JSON file")->check(CLI::ExistingFile);
    am->add_option("--enter-k", amCfg.enterK)->capture_default_str();
    am->add_option("--recover-n", amCfg.recoverN)->capture_default_str();
    am->add_option("--log", amLog, "Knowledge log (JSON lines)");

    // run-emulator
    auto* em = app.add_subcommand("run-emulator", "Run a scenario's injectors against a running target");
    std::string emScenario, emTarget, emAm, emOut;
    std::optional<std::uint64_t> emSeed;
    em->add_option("--scenario", emScenario, "Scenario file (its injectors are used)")->required()
        ->check(CLI::ExistingFile);
    em->add_option("--target", emTarget, "Entry point (host:port)")->required();
    em->add_option("--am", emAm, "Autonomic manager to feed HIGH RTT samples to (host:port)");
    em->add_option("--out", emOut, "Output directory");
    em->add_option("--seed", emSeed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return runScenarioCmd(scenarioPath, mode, outDir, seed, duration);

        if (em->parsed()) {
            auto sc = scenario::loadScenario(emScenario);
            metrics::MetricsRecorder rec;
            if (!emAm.empty()) {
                auto amEp = Endpoint::parse(emAm);
                rec.setSampleSink([amEp](const metrics::RttObservation& o) {
                    try {
                        httpJson(amEp, "POST", "/admin/am/sample",
                                 {{"rtt_ms", o.rttMs}, {"priority", std::string(toWire(o.priority))},
                                  {"request_id", o.requestId}});
                    } catch (const std::exception& e) {
                        std::cerr << "sample not delivered: " << e.what() << '\n';
                    }
                });
            }
            std::vector<emulator::InjectorSpec> specs;
            auto base = emSeed.value_or(sc.seed);
            for (std::size_t i = 0; i < sc.injectors.size(); ++i) {
                const auto& e = sc.injectors[i];
                emulator::InjectorSpec s;
                s.profile = e.profile;
                s.target = Endpoint::parse(emTarget);
                s.path = e.path;
                s.phaseMs = e.phaseMs;
                s.seed = e.seed.value_or(base + i);
                if (e.totalRequests) {
                    s.totalRequests = e.totalRequests;
                } else {
                    s.durationS = e.durationS.value_or(sc.durationS);
                }
                specs.push_back(std::move(s));
            }
            emulator::ScenarioRun r(std::move(specs), rec);
            r.wait();
            auto ds = rec.dataset();
            if (ds.records.empty()) {
                std::cout << "no requests sent\n";
                return 0;
            }
            auto summary = metrics::summarize(ds);
            std::cout << metrics::toJson(summary).dump(2) << '\n';
            if (!emOut.empty()) {
                std::filesystem::path out(emOut);
                metrics::writeRequestsCsv(ds, out / "requests.csv");
                for (const auto& [name, _] : summary.injectors) {
                    metrics::writeRequestsCsv(ds, out / ("injector-" + name + ".csv"), name);
                }
            }
            bool closed = std::all_of(summary.injectors.begin(), summary.injectors.end(),
                                      [](const auto& kv) { return kv.second.closed(); });
            return closed ? 0 : 1;
        }

        blockSignals();

        if (gw->parsed()) {
            gwCfg.serviceTime = std::chrono::milliseconds(serviceMs);
            gwCfg.jitter = std::chrono::milliseconds(jitterMs);
            gateway::Gateway g(gwCfg);
            g.start(host, port);
            announce("gateway", g.endpoint());
            waitForSignal();
            g.stop();
        } else if (cm->parsed()) {
            cmc::CmcState st;
            if (!cmcPolicy.empty()) st.policy = decode<CmcPolicy>(readJsonFile(cmcPolicy));
            st.pep = Endpoint::parse(cmcPep);
            st.gateway = Endpoint::parse(cmcGateway);
            st.activated = !cmcOff;
            cmc::CmcServer s(st);
            s.start(host, port);
            announce("cmc", s.endpoint());
            waitForSignal();
            s.stop();
        } else if (pp->parsed()) {
            pepCfg.upstream = Endpoint::parse(pepUpstream);
            if (!pepPolicy.empty()) pepCfg.policy = decodePepPolicy(readJsonFile(pepPolicy));
            pepCfg.rejectionMode = pep::parseRejectionMode(pepMode);
            pep::PepServer s(pepCfg);
            s.start(host, port);
            announce("pep", s.endpoint());
            std::cout << s.statsJson().at("policy").dump() << std::endl;
            waitForSignal();
            s.stop();
        } else if (lb->parsed()) {
            cluster::BalancerConfig cfg;
            cfg.strategy = cluster::parseStrategy(lbStrategy);
            for (const auto& spec : lbInstances) {
                auto at = spec.find('@');
                cluster::Instance inst{Endpoint::parse(spec.substr(0, at)), 1};
                if (at != std::string::npos) inst.weight = std::stoi(spec.substr(at + 1));
                cfg.instances.push_back(inst);
            }
            cluster::BalancerServer s(cfg);
            s.start(host, port);
            announce("balancer", s.endpoint());
            waitForSignal();
            s.stop();
        } else if (am->parsed()) {
            if (!amPep.empty()) amCfg.pepAdmin = Endpoint::parse(amPep);
            if (!amRules.empty()) amCfg.rules = decodeAdaptationRules(readJsonFile(amRules));
            amCfg.knowledgeLogPath = amLog;
            autonomic::AutonomicManager m(amCfg);
            m.start(host, port);
            announce("autonomic manager", m.endpoint());
            waitForSignal();
            m.stop();
        }
        return 0;
    } catch (const scenario::InvalidScenario& e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
