#include "mqos/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace mqos {

std::string_view toWire(Priority p) noexcept {
    switch (p) {
    case Priority::High: return "PRIORITY_HIGH";
    case Priority::Medium: return "PRIORITY_MEDIUM";
    case Priority::Low: return "PRIORITY_LOW";
    }
    return "PRIORITY_LOW";
}

std::string_view shortName(Priority p) noexcept {
    switch (p) {
    case Priority::High: return "HIGH";
    case Priority::Medium: return "MEDIUM";
    case Priority::Low: return "LOW";
    }
    return "LOW";
}

Priority parsePriority(std::string_view headerValue) {
    for (auto p : kPrioritiesByPrecedence) {
        if (headerValue == toWire(p)) return p;
    }
    throw MalformedPriority(headerValue);
}

Priority parsePriorityLoose(std::string_view value) {
    for (auto p : kPrioritiesByPrecedence) {
        if (value == toWire(p) || value == shortName(p)) return p;
    }
    throw MalformedPriority(value);
}

bool iequals(std::string_view a, std::string_view b) noexcept {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

// --- TaggedRequest ----------------------------------------------------------

TaggedRequest TaggedRequest::fromWire(std::string method, std::string target, HeaderList headers,
                                      std::string body, std::string peerAddress,
                                      std::string destination) {
    TaggedRequest req;
    req.method = std::move(method);
    req.target = std::move(target);
    req.body = std::move(body);
    req.destination = std::move(destination);

    std::optional<Priority> prio;
    std::optional<std::string> source;
    for (auto it = headers.begin(); it != headers.end();) {
        if (iequals(it->first, headers::kTos)) {
            try {
                auto p = parsePriority(it->second);
                if (!prio) prio = p;
                ++it;
            } catch (const MalformedPriority&) {
                it = headers.erase(it);
            }
            continue;
        }
        if (iequals(it->first, headers::kSourceId) && !source) source = it->second;
        ++it;
    }
    // A request carrying several TOS_HTTP headers keeps only the first valid one.
    if (prio) {
        bool seen = false;
        std::erase_if(headers, [&](const auto& h) {
            if (!iequals(h.first, headers::kTos)) return false;
            if (!seen && h.second == toWire(*prio)) {
                seen = true;
                return false;
            }
            return true;
        });
    }
    req.headers_ = std::move(headers);
    req.priority_ = prio;
    req.sourceId = source.value_or(std::move(peerAddress));
    return req;
}

std::optional<std::string> TaggedRequest::header(std::string_view name) const {
    for (const auto& [k, v] : headers_) {
        if (iequals(k, name)) return v;
    }
    return std::nullopt;
}

void TaggedRequest::setHeader(std::string_view name, std::string value) {
    if (iequals(name, headers::kTos)) throw Error("TOS_HTTP can only be set through mark()");
    for (auto& [k, v] : headers_) {
        if (iequals(k, name)) {
            v = std::move(value);
            return;
        }
    }
    headers_.emplace_back(std::string(name), std::move(value));
}

void TaggedRequest::mark(Priority p) {
    if (priority_) throw Error("request is already marked");
    priority_ = p;
    headers_.emplace_back(std::string(headers::kTos), std::string(toWire(p)));
}

// --- classification ---------------------------------------------------------

bool MatchCriterion::matches(const TaggedRequest& req) const {
    std::string_view subject;
    switch (field) {
    case MatchField::Source: subject = req.sourceId; break;
    case MatchField::Destination: subject = req.destination; break;
    case MatchField::Path: subject = req.target; break;
    }
    return kind == MatchKind::Exact ? subject == value : subject.starts_with(value);
}

bool ClassificationRule::matches(const TaggedRequest& req) const {
    return std::all_of(criteria.begin(), criteria.end(),
                       [&](const MatchCriterion& c) { return c.matches(req); });
}

Priority MarkingPolicy::priorityFor(const std::string& className) const {
    auto it = classToPriority.find(className);
    return it == classToPriority.end() ? defaultPriority : it->second;
}

// --- PEP policy -------------------------------------------------------------

std::string_view toString(Mechanism m) noexcept {
    switch (m) {
    case Mechanism::Reject: return "REJECT";
    case Mechanism::Delay: return "DELAY";
    case Mechanism::Schedule: return "SCHEDULE";
    }
    return "REJECT";
}

Mechanism parseMechanism(std::string_view s) {
    for (auto m : {Mechanism::Reject, Mechanism::Delay, Mechanism::Schedule}) {
        if (s == toString(m)) return m;
    }
    throw InvalidPolicy("enabled_mechanisms", "unknown mechanism '" + std::string(s) + "'");
}

std::string_view toString(Discipline d) noexcept {
    return d == Discipline::Wfq ? "WFQ" : "PRIORITY_FIRST";
}

Discipline parseDiscipline(std::string_view s) {
    if (s == "WFQ") return Discipline::Wfq;
    if (s == "PRIORITY_FIRST") return Discipline::PriorityFirst;
    throw InvalidPolicy("scheduling", "unknown discipline '" + std::string(s) + "'");
}

PepPolicy validatePolicy(PepPolicy p) {
    for (auto prio : kPrioritiesByPrecedence) {
        auto name = std::string(shortName(prio));
        if (p.rejectionPct[prio] < 0 || p.rejectionPct[prio] > 100) {
            throw InvalidPolicy("rejection", name + " percentage " +
                                                 std::to_string(p.rejectionPct[prio]) +
                                                 " out of range [0,100]");
        }
        if (p.delayMs[prio] < 0) {
            throw InvalidPolicy("delay", name + " delay must be >= 0");
        }
        if (p.weights[prio] <= 0) {
            throw InvalidPolicy("weights", name + " has non-positive weight " +
                                               std::to_string(p.weights[prio]));
        }
    }
    return p;
}

// --- adaptation rules -------------------------------------------------------

std::string_view toString(RttState s) noexcept {
    switch (s) {
    case RttState::Normal: return "NORMAL";
    case RttState::Warning: return "WARNING";
    case RttState::Critical: return "CRITICAL";
    }
    return "NORMAL";
}

RttState parseRttState(std::string_view s) {
    for (auto st : {RttState::Normal, RttState::Warning, RttState::Critical}) {
        if (s == toString(st)) return st;
    }
    throw InvalidPolicy("state", "unknown state '" + std::string(s) + "'");
}

std::vector<AdaptationRule> defaultAdaptationRules() {
    return {
        {0.0, 300.0, RttState::Normal, 0, 0},
        {300.0, 400.0, RttState::Warning, 30, 70},
        {400.0, std::nullopt, RttState::Critical, 40, 80},
    };
}

std::vector<AdaptationRule> validateAdaptationRules(std::vector<AdaptationRule> rules) {
    if (rules.empty()) throw InvalidPolicy("rules", "no adaptation rules");
    std::sort(rules.begin(), rules.end(),
              [](const auto& a, const auto& b) { return a.lowerMs < b.lowerMs; });
    if (rules.front().lowerMs != 0.0) throw InvalidPolicy("rules", "bands must start at 0 ms");
    std::array<bool, 3> seen{};
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const auto& r = rules[i];
        auto& s = seen[static_cast<std::size_t>(r.state)];
        if (s) throw InvalidPolicy("rules", "state " + std::string(toString(r.state)) + " repeated");
        s = true;
        if (r.medRejection < 0 || r.medRejection > 100 || r.lowRejection < 0 ||
            r.lowRejection > 100) {
            throw InvalidPolicy("rules", "rejection percentage out of range [0,100]");
        }
        bool last = i + 1 == rules.size();
        if (last) {
            if (r.upperMs) throw InvalidPolicy("rules", "last band must be unbounded");
        } else {
            if (!r.upperMs || *r.upperMs <= r.lowerMs) {
                throw InvalidPolicy("rules", "band upper bound must exceed lower bound");
            }
            if (*r.upperMs != rules[i + 1].lowerMs) {
                throw InvalidPolicy("rules", "bands leave a gap or overlap at " +
                                                 std::to_string(*r.upperMs) + " ms");
            }
        }
    }
    return rules;
}

const AdaptationRule& ruleForRtt(const std::vector<AdaptationRule>& rules, double rttMs) {
    for (const auto& r : rules) {
        if (r.contains(rttMs)) return r;
    }
    // Negative values land in the first band.
    return rules.front();
}

// --- profiles ---------------------------------------------------------------

std::string_view toString(ArrivalModel m) noexcept {
    switch (m) {
    case ArrivalModel::Periodic: return "PERIODIC";
    case ArrivalModel::Stochastic: return "STOCHASTIC";
    case ArrivalModel::Burst: return "BURST";
    }
    return "PERIODIC";
}

ArrivalModel parseArrivalModel(std::string_view s) {
    for (auto m : {ArrivalModel::Periodic, ArrivalModel::Stochastic, ArrivalModel::Burst}) {
        if (s == toString(m)) return m;
    }
    throw InvalidPolicy("arrival", "unknown arrival model '" + std::string(s) + "'");
}

AppProfile validateProfile(AppProfile p) {
    if (!(p.rate > 0) || !std::isfinite(p.rate)) throw InvalidPolicy("rate", "rate must be > 0");
    if (p.arrival == ArrivalModel::Burst) {
        if (p.burstSize < 1) throw InvalidPolicy("burst_size", "burst size must be >= 1");
        if (!(p.burstPeriodS > 0)) throw InvalidPolicy("burst_period", "burst period must be > 0");
    }
    if (p.acceptableLoss && (*p.acceptableLoss < 0 || *p.acceptableLoss > 1)) {
        throw InvalidPolicy("acceptable_loss", "loss fraction must be in [0,1]");
    }
    if (p.acceptableRttMs && *p.acceptableRttMs < 0) {
        throw InvalidPolicy("acceptable_rtt", "acceptable RTT must be >= 0");
    }
    return p;
}

} // namespace mqos
