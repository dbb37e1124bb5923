#pragma once

// JSON encoding of the model types. Used for admin endpoint bodies, policy
// files and scenario files.
//
// PepPolicy:
//   { "enabled_mechanisms": ["REJECT", "DELAY", "SCHEDULE"],
//     "rejection": {"HIGH": 0, "MEDIUM": 40, "LOW": 80},
//     "delay_ms":  {"HIGH": 0, "MEDIUM": 0, "LOW": 0},
//     "scheduling": {"discipline": "WFQ", "weights": {"HIGH": 4, "MEDIUM": 2, "LOW": 1}} }
// AdaptationRule:
//   { "min_ms": 300, "max_ms": 400, "state": "WARNING", "med_rejection": 30, "low_rejection": 70 }
//   (max_ms null or absent = unbounded)
// CMC policy document (ClassificationPolicy + MarkingPolicy):
//   { "rules": [ {"match": [{"field": "source", "kind": "exact", "value": "PostOp_Inj"}],
//                 "class": "postop"} ],
//     "default_class": "default",
//     "marking": {"postop": "PRIORITY_HIGH"}, "default_priority": "PRIORITY_LOW" }
// AppProfile:
//   { "name": "PostOp_Inj", "rate": 6, "arrival": "PERIODIC", "burst_size": 1,
//     "burst_period_s": 1, "acceptable_rtt_ms": 350, "acceptable_loss": 0,
//     "priority": "PRIORITY_HIGH" }
//
// Priority keys accept both the wire form (PRIORITY_HIGH) and the short form
// (HIGH). Missing keys take their defaults.

#include "mqos/model.hpp"

#include <json.hpp>

namespace mqos {

using Json = nlohmann::json;

void to_json(Json& j, const PepPolicy& p);
void from_json(const Json& j, PepPolicy& p);

void to_json(Json& j, const AdaptationRule& r);
void from_json(const Json& j, AdaptationRule& r);

void to_json(Json& j, const MatchCriterion& c);
void from_json(const Json& j, MatchCriterion& c);

void to_json(Json& j, const ClassificationRule& r);
void from_json(const Json& j, ClassificationRule& r);

void to_json(Json& j, const AppProfile& p);
void from_json(const Json& j, AppProfile& p);

/// Classification and marking travel together in one document.
struct CmcPolicy {
    ClassificationPolicy classification;
    MarkingPolicy marking;
    friend bool operator==(const CmcPolicy&, const CmcPolicy&) = default;
};

void to_json(Json& j, const CmcPolicy& p);
void from_json(const Json& j, CmcPolicy& p);

/// Decodes a document, turning JSON type/shape errors into InvalidPolicy.
template <class T>
T decode(const Json& j) {
    try {
        return j.get<T>();
    } catch (const Json::exception& e) {
        throw InvalidPolicy("document", e.what());
    }
}

/// Decode + validatePolicy.
PepPolicy decodePepPolicy(const Json& j);
/// Decode + validateAdaptationRules.
std::vector<AdaptationRule> decodeAdaptationRules(const Json& j);
/// Decode + validateProfile.
AppProfile decodeProfile(const Json& j);

} // namespace mqos
