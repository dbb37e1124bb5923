#include "mqos/autonomic.hpp"

#include "http_internal.hpp"

#include <algorithm>

namespace mqos::autonomic {

// --- StateMachine -----------------------------------------------------------

StateMachine::StateMachine(std::vector<AdaptationRule> rules, int enterK, int recoverN)
    : rules_(validateAdaptationRules(std::move(rules))), enterK_(enterK), recoverN_(recoverN) {
    if (enterK_ < 1 || recoverN_ < 1) throw InvalidPolicy("thresholds", "streak thresholds must be >= 1");
}

std::optional<RttState> StateMachine::observe(double rttMs) {
    auto band = bandOf(rttMs);
    for (std::size_t i = 0; i < streak_.size(); ++i) {
        streak_[i] = static_cast<RttState>(i) == band ? streak_[i] + 1 : 0;
    }
    if (band != current_ && streak(band) >= required(band)) {
        current_ = band;
        return band;
    }
    return std::nullopt;
}

// --- plan -------------------------------------------------------------------

PepPolicy plan(RttState state, const std::vector<AdaptationRule>& rules, const PepPolicy& baseline) {
    auto it = std::find_if(rules.begin(), rules.end(), [&](const auto& r) { return r.state == state; });
    if (it == rules.end()) throw UnknownState(state);
    PepPolicy p = baseline;
    p.enabled = MechanismSet{Mechanism::Reject};
    p.rejectionPct = PerPriority<int>::of(0, it->medRejection, it->lowRejection);
    return validatePolicy(p);
}

// --- KnowledgeLog -----------------------------------------------------------

KnowledgeLog::KnowledgeLog(const std::string& path) {
    if (!path.empty()) {
        file_.open(path, std::ios::app);
        if (!file_) throw Error("cannot open knowledge log " + path);
    }
}

void KnowledgeLog::append(Json record) {
    std::lock_guard lk(mu_);
    if (file_.is_open()) file_ << record.dump() << '\n' << std::flush;
    entries_.push_back(std::move(record));
}

std::vector<Json> KnowledgeLog::entries() const {
    std::lock_guard lk(mu_);
    return entries_;
}

std::vector<Json> KnowledgeLog::entries(std::string_view kind) const {
    std::lock_guard lk(mu_);
    std::vector<Json> out;
    for (const auto& e : entries_) {
        if (e.value("kind", "") == kind) out.push_back(e);
    }
    return out;
}

// --- execution --------------------------------------------------------------

void execute(const PepPolicy& policy, const Endpoint& pepAdmin) {
    JsonReply reply;
    try {
        reply = httpJson(pepAdmin, "PUT", "/admin/pep/policy", Json(policy));
    } catch (const UpstreamUnreachable& e) {
        throw ExecutionFailed(e.what());
    }
    if (reply.status != 200) {
        throw ExecutionFailed("PEP answered " + std::to_string(reply.status) + ": " + reply.body.dump());
    }
}

PolicyExecutor::PolicyExecutor(Deliver deliver, Report report, RetryPolicy retry)
    : deliver_(std::move(deliver)), report_(std::move(report)), retry_(retry),
      thread_([this](std::stop_token st) { run(st); }) {}

PolicyExecutor::~PolicyExecutor() {
    thread_.request_stop();
    cv_.notify_all();
}

void PolicyExecutor::submit(PepPolicy policy, RttState state) {
    {
        std::lock_guard lk(mu_);
        pending_ = std::make_pair(std::move(policy), state);
        generation_++;
    }
    cv_.notify_all();
}

void PolicyExecutor::drain() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return !pending_ && !busy_; });
}

void PolicyExecutor::run(std::stop_token st) {
    std::unique_lock lk(mu_);
    while (!st.stop_requested()) {
        if (!cv_.wait(lk, st, [&] { return pending_.has_value(); })) break;
        auto [policy, state] = std::move(*pending_);
        pending_.reset();
        auto gen = generation_;
        busy_ = true;

        auto backoff = retry_.initialBackoff;
        std::string lastError;
        bool ok = false;
        for (int attempt = 0; attempt < retry_.attempts && !st.stop_requested(); ++attempt) {
            lk.unlock();
            try {
                deliver_(policy);
                ok = true;
            } catch (const std::exception& e) {
                lastError = e.what();
            }
            lk.lock();
            if (ok || generation_ != gen) break;
            cv_.wait_for(lk, st, backoff, [&] { return generation_ != gen; });
            if (generation_ != gen) break;
            backoff = std::min(backoff * 2, retry_.maxBackoff);
        }
        bool superseded = !ok && generation_ != gen;
        lk.unlock();
        if (report_ && !superseded) report_(policy, state, ok, lastError);
        lk.lock();
        busy_ = false;
        cv_.notify_all();
    }
}

// --- AutonomicManager -------------------------------------------------------

AutonomicManager::AutonomicManager(ManagerConfig cfg)
    : cfg_(std::move(cfg)),
      log_(cfg_.knowledgeLogPath),
      sm_(cfg_.rules, cfg_.enterK, cfg_.recoverN),
      executor_(
          [this](const PepPolicy& p) {
              if (cfg_.pepAdmin) execute(p, *cfg_.pepAdmin);
          },
          [this](const PepPolicy& p, RttState s, bool ok, const std::string& err) {
              Json rec{{"t_ns", monotonicNs()},
                       {"kind", ok ? "execute" : "execution_failed"},
                       {"state", std::string(toString(s))},
                       {"policy", p}};
              if (!ok) rec["error"] = err;
              log_.append(std::move(rec));
          },
          cfg_.retry),
      loop_([this](std::stop_token st) { loop(st); }) {
    log_.append({{"t_ns", monotonicNs()},
                 {"kind", "start"},
                 {"state", std::string(toString(sm_.current()))},
                 {"rules", sm_.rules()},
                 {"enter_k", cfg_.enterK},
                 {"recover_n", cfg_.recoverN}});

    auto& srv = http_.routes();
    srv.Post("/admin/am/sample", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = detail::parseBody(req, res);
        if (!body) return;
        try {
            RttSample s;
            s.rttMs = body->at("rtt_ms").get<double>();
            s.priority = parsePriorityLoose(body->value("priority", std::string("PRIORITY_HIGH")));
            s.requestId = body->value("request_id", std::string());
            s.completedAtNs = monotonicNs();
            if (s.rttMs < 0) throw Error("rtt_ms must be >= 0");
            submit(std::move(s));
            detail::replyJson(res, {{"accepted", true}}, 202);
        } catch (const std::exception& e) {
            detail::replyError(res, 400, e.what());
        }
    });
    srv.Get("/admin/am/state", [this](const httplib::Request&, httplib::Response& res) {
        detail::replyJson(res, stateJson());
    });
}

AutonomicManager::~AutonomicManager() { stop(); }

void AutonomicManager::stop() {
    http_.stop();
    loop_.request_stop();
    cv_.notify_all();
    if (loop_.joinable()) loop_.join();
}

void AutonomicManager::submit(RttSample sample) {
    if (sample.priority != Priority::High) return;
    {
        std::lock_guard lk(mu_);
        inbox_.push_back(std::move(sample));
    }
    cv_.notify_one();
}

void AutonomicManager::flush() {
    {
        std::unique_lock lk(mu_);
        idle_.wait(lk, [&] { return inbox_.empty() && !processing_; });
    }
    executor_.drain();
}

void AutonomicManager::loop(std::stop_token st) {
    std::unique_lock lk(mu_);
    while (true) {
        if (!cv_.wait(lk, st, [&] { return !inbox_.empty(); })) break;
        auto s = std::move(inbox_.front());
        inbox_.pop_front();
        processing_ = true;
        lk.unlock();
        process(s);
        lk.lock();
        processing_ = false;
        if (inbox_.empty()) idle_.notify_all();
    }
    processing_ = false;
    idle_.notify_all();
}

void AutonomicManager::process(const RttSample& s) {
    std::optional<RttState> next;
    RttState before;
    std::uint64_t index;
    {
        std::lock_guard lk(mu_);
        before = sm_.current();
        next = sm_.observe(s.rttMs);
        index = ++processed_;
        if (next) transitions_.push_back({s.completedAtNs, index, before, *next});
    }
    if (cfg_.logSamples) {
        log_.append({{"t_ns", s.completedAtNs},
                     {"kind", "sample"},
                     {"index", index},
                     {"request_id", s.requestId},
                     {"rtt_ms", s.rttMs},
                     {"band", std::string(toString(sm_.bandOf(s.rttMs)))},
                     {"state", std::string(toString(next.value_or(before)))}});
    }
    if (!next) return;

    auto policy = plan(*next, sm_.rules(), cfg_.baseline);
    log_.append({{"t_ns", s.completedAtNs},
                 {"kind", "transition"},
                 {"index", index},
                 {"from", std::string(toString(before))},
                 {"to", std::string(toString(*next))},
                 {"action", policy}});
    executor_.submit(std::move(policy), *next);
}

RttState AutonomicManager::state() const {
    std::lock_guard lk(mu_);
    return sm_.current();
}

std::vector<TransitionRecord> AutonomicManager::transitions() const {
    std::lock_guard lk(mu_);
    return transitions_;
}

std::uint64_t AutonomicManager::samplesProcessed() const {
    std::lock_guard lk(mu_);
    return processed_;
}

Json AutonomicManager::stateJson() const {
    std::lock_guard lk(mu_);
    Json trans = Json::array();
    for (const auto& t : transitions_) {
        trans.push_back({{"t_ns", t.atNs},
                         {"index", t.sampleIndex},
                         {"from", std::string(toString(t.from))},
                         {"to", std::string(toString(t.to))}});
    }
    return Json{{"state", std::string(toString(sm_.current()))},
                {"samples", processed_},
                {"streaks",
                 {{"NORMAL", sm_.streak(RttState::Normal)},
                  {"WARNING", sm_.streak(RttState::Warning)},
                  {"CRITICAL", sm_.streak(RttState::Critical)}}},
                {"transitions", trans}};
}

} // namespace mqos::autonomic
