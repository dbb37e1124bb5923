#include "mqos/model_json.hpp"

namespace mqos {

namespace {

template <class T>
Json perPriorityToJson(const PerPriority<T>& t) {
    Json j = Json::object();
    for (auto p : kPrioritiesByPrecedence) j[std::string(shortName(p))] = t[p];
    return j;
}

template <class T>
void perPriorityFromJson(const Json& j, PerPriority<T>& out) {
    if (!j.is_object()) throw InvalidPolicy("document", "expected an object keyed by priority");
    for (auto it = j.begin(); it != j.end(); ++it) {
        out[parsePriorityLoose(it.key())] = it.value().get<T>();
    }
}

std::string_view fieldName(MatchField f) {
    switch (f) {
    case MatchField::Source: return "source";
    case MatchField::Destination: return "destination";
    case MatchField::Path: return "path";
    }
    return "source";
}

} // namespace

// --- PepPolicy --------------------------------------------------------------

void to_json(Json& j, const PepPolicy& p) {
    Json mechs = Json::array();
    for (auto m : {Mechanism::Reject, Mechanism::Delay, Mechanism::Schedule}) {
        if (p.enabled.contains(m)) mechs.push_back(std::string(toString(m)));
    }
    j = Json{{"enabled_mechanisms", mechs},
             {"rejection", perPriorityToJson(p.rejectionPct)},
             {"delay_ms", perPriorityToJson(p.delayMs)},
             {"scheduling",
              {{"discipline", std::string(toString(p.discipline))},
               {"weights", perPriorityToJson(p.weights)}}}};
}

void from_json(const Json& j, PepPolicy& p) {
    p = PepPolicy{};
    if (auto it = j.find("enabled_mechanisms"); it != j.end()) {
        for (const auto& m : *it) p.enabled.insert(parseMechanism(m.get<std::string>()));
    }
    if (auto it = j.find("rejection"); it != j.end()) perPriorityFromJson(*it, p.rejectionPct);
    if (auto it = j.find("delay_ms"); it != j.end()) perPriorityFromJson(*it, p.delayMs);
    if (auto it = j.find("scheduling"); it != j.end()) {
        if (auto d = it->find("discipline"); d != it->end()) {
            p.discipline = parseDiscipline(d->get<std::string>());
        }
        if (auto w = it->find("weights"); w != it->end()) perPriorityFromJson(*w, p.weights);
    }
}

// --- AdaptationRule ---------------------------------------------------------

void to_json(Json& j, const AdaptationRule& r) {
    j = Json{{"min_ms", r.lowerMs},
             {"max_ms", r.upperMs ? Json(*r.upperMs) : Json(nullptr)},
             {"state", std::string(toString(r.state))},
             {"med_rejection", r.medRejection},
             {"low_rejection", r.lowRejection}};
}

void from_json(const Json& j, AdaptationRule& r) {
    r = AdaptationRule{};
    r.lowerMs = j.value("min_ms", 0.0);
    if (auto it = j.find("max_ms"); it != j.end() && !it->is_null()) r.upperMs = it->get<double>();
    r.state = parseRttState(j.at("state").get<std::string>());
    r.medRejection = j.value("med_rejection", 0);
    r.lowRejection = j.value("low_rejection", 0);
}

// --- classification ---------------------------------------------------------

void to_json(Json& j, const MatchCriterion& c) {
    j = Json{{"field", std::string(fieldName(c.field))},
             {"kind", c.kind == MatchKind::Exact ? "exact" : "prefix"},
             {"value", c.value}};
}

void from_json(const Json& j, MatchCriterion& c) {
    auto field = j.at("field").get<std::string>();
    if (field == "source") c.field = MatchField::Source;
    else if (field == "destination") c.field = MatchField::Destination;
    else if (field == "path") c.field = MatchField::Path;
    else throw InvalidPolicy("rules", "unknown match field '" + field + "'");

    auto kind = j.value("kind", std::string("exact"));
    if (kind == "exact") c.kind = MatchKind::Exact;
    else if (kind == "prefix") c.kind = MatchKind::Prefix;
    else throw InvalidPolicy("rules", "unknown match kind '" + kind + "'");

    c.value = j.at("value").get<std::string>();
}

void to_json(Json& j, const ClassificationRule& r) {
    j = Json{{"match", r.criteria}, {"class", r.className}};
}

void from_json(const Json& j, ClassificationRule& r) {
    r.criteria = j.value("match", std::vector<MatchCriterion>{});
    r.className = j.at("class").get<std::string>();
}

void to_json(Json& j, const CmcPolicy& p) {
    Json marking = Json::object();
    for (const auto& [cls, prio] : p.marking.classToPriority) {
        marking[cls] = std::string(toWire(prio));
    }
    j = Json{{"rules", p.classification.rules},
             {"default_class", p.classification.defaultClass},
             {"marking", marking},
             {"default_priority", std::string(toWire(p.marking.defaultPriority))}};
}

void from_json(const Json& j, CmcPolicy& p) {
    p = CmcPolicy{};
    p.classification.rules = j.value("rules", std::vector<ClassificationRule>{});
    p.classification.defaultClass = j.value("default_class", std::string("default"));
    if (auto it = j.find("marking"); it != j.end()) {
        for (auto m = it->begin(); m != it->end(); ++m) {
            p.marking.classToPriority[m.key()] = parsePriorityLoose(m.value().get<std::string>());
        }
    }
    if (auto it = j.find("default_priority"); it != j.end()) {
        p.marking.defaultPriority = parsePriorityLoose(it->get<std::string>());
    }
}

// --- AppProfile -------------------------------------------------------------

void to_json(Json& j, const AppProfile& p) {
    j = Json{{"name", p.name},
             {"rate", p.rate},
             {"arrival", std::string(toString(p.arrival))},
             {"burst_size", p.burstSize},
             {"burst_period_s", p.burstPeriodS},
             {"acceptable_rtt_ms", p.acceptableRttMs ? Json(*p.acceptableRttMs) : Json(nullptr)},
             {"acceptable_loss", p.acceptableLoss ? Json(*p.acceptableLoss) : Json(nullptr)},
             {"priority", std::string(toWire(p.priorityHint))}};
}

void from_json(const Json& j, AppProfile& p) {
    p = AppProfile{};
    p.name = j.at("name").get<std::string>();
    p.rate = j.at("rate").get<double>();
    p.arrival = parseArrivalModel(j.value("arrival", std::string("PERIODIC")));
    p.burstSize = j.value("burst_size", 1);
    p.burstPeriodS = j.value("burst_period_s", 1.0);
    if (auto it = j.find("acceptable_rtt_ms"); it != j.end() && !it->is_null()) {
        p.acceptableRttMs = it->get<double>();
    }
    if (auto it = j.find("acceptable_loss"); it != j.end() && !it->is_null()) {
        p.acceptableLoss = it->get<double>();
    }
    if (auto it = j.find("priority"); it != j.end()) {
        p.priorityHint = parsePriorityLoose(it->get<std::string>());
    }
}

// --- validated decoders -----------------------------------------------------

PepPolicy decodePepPolicy(const Json& j) { return validatePolicy(decode<PepPolicy>(j)); }

std::vector<AdaptationRule> decodeAdaptationRules(const Json& j) {
    return validateAdaptationRules(decode<std::vector<AdaptationRule>>(j));
}

AppProfile decodeProfile(const Json& j) { return validateProfile(decode<AppProfile>(j)); }

} // namespace mqos
