#include "mqos/model.hpp"
#include "mqos/model_json.hpp"

#include "test.hpp"

#include <random>

using namespace mqos;

TEST_SUITE("model") {

TEST_CASE("priority wire forms") {
    CHECK(parsePriority("PRIORITY_HIGH") == Priority::High);
    CHECK(parsePriority("PRIORITY_MEDIUM") == Priority::Medium);
    CHECK(parsePriority("PRIORITY_LOW") == Priority::Low);
    CHECK_THROWS_AS(parsePriority("HIGH"), MalformedPriority);
    CHECK_THROWS_AS(parsePriority("priority_high"), MalformedPriority);
    CHECK(parsePriorityLoose("MEDIUM") == Priority::Medium);
    CHECK(Priority::High > Priority::Medium);
    CHECK(Priority::Medium > Priority::Low);
    for (auto p : kPrioritiesByPrecedence) CHECK(parsePriority(toWire(p)) == p);
}

TEST_CASE("fromWire keeps priority and header in lockstep") {
    auto r = TaggedRequest::fromWire("POST", "/a/data", {{"TOS_HTTP", "PRIORITY_MEDIUM"}, {"X-Source-Id", "Loc_Inj"}},
                                     "{}", "10.0.0.1");
    CHECK(r.priority() == Priority::Medium);
    CHECK(r.header("tos_http") == "PRIORITY_MEDIUM");
    CHECK(r.sourceId == "Loc_Inj");

    SUBCASE("malformed mark is dropped") {
        auto m = TaggedRequest::fromWire("POST", "/", {{"TOS_HTTP", "URGENT"}, {"Accept", "*/*"}}, "", "10.0.0.2");
        CHECK_FALSE(m.marked());
        CHECK_FALSE(m.header("TOS_HTTP"));
        CHECK(m.header("Accept") == "*/*");
        CHECK(m.sourceId == "10.0.0.2");
    }
    SUBCASE("first valid mark wins") {
        auto m = TaggedRequest::fromWire("POST", "/",
                                         {{"TOS_HTTP", "bogus"}, {"TOS_HTTP", "PRIORITY_HIGH"}, {"TOS_HTTP", "PRIORITY_LOW"}},
                                         "", "p");
        CHECK(m.priority() == Priority::High);
        int n = 0;
        for (const auto& [k, v] : m.headers()) n += iequals(k, "TOS_HTTP");
        CHECK(n == 1);
    }
}

TEST_CASE("marking is one-shot") {
    TaggedRequest r;
    CHECK_FALSE(r.marked());
    r.mark(Priority::Low);
    CHECK(r.header("TOS_HTTP") == "PRIORITY_LOW");
    CHECK_THROWS(r.mark(Priority::High));
    CHECK_THROWS(r.setHeader("TOS_HTTP", "PRIORITY_HIGH"));
    r.stampIngress(5);
    r.stampIngress(9);
    CHECK(r.ingressNs() == 5);
}

TEST_CASE("policy validation names the field") {
    PepPolicy p;
    p.rejectionPct[Priority::Low] = 101;
    try {
        validatePolicy(p);
        FAIL("accepted 101%");
    } catch (const InvalidPolicy& e) {
        CHECK(e.field() == "rejection");
    }
    p = {};
    p.delayMs[Priority::Medium] = -1;
    CHECK_THROWS_AS(validatePolicy(p), InvalidPolicy);
    p = {};
    p.weights[Priority::High] = 0;
    try {
        validatePolicy(p);
        FAIL("accepted weight 0");
    } catch (const InvalidPolicy& e) {
        CHECK(e.field() == "weights");
    }
    CHECK_NOTHROW(validatePolicy(PepPolicy{}));
}

TEST_CASE("adaptation bands") {
    auto rules = validateAdaptationRules(defaultAdaptationRules());
    CHECK(ruleForRtt(rules, 0).state == RttState::Normal);
    CHECK(ruleForRtt(rules, 299.9).state == RttState::Normal);
    CHECK(ruleForRtt(rules, 300).state == RttState::Warning);
    CHECK(ruleForRtt(rules, 399.99).state == RttState::Warning);
    CHECK(ruleForRtt(rules, 400).state == RttState::Critical);
    CHECK(ruleForRtt(rules, 1e9).state == RttState::Critical);
    const auto& crit = ruleForRtt(rules, 500);
    CHECK(crit.medRejection == 40);
    CHECK(crit.lowRejection == 80);
    const auto& warn = ruleForRtt(rules, 350);
    CHECK(warn.medRejection == 30);
    CHECK(warn.lowRejection == 70);

    auto gap = rules;
    gap[1].lowerMs = 310;
    CHECK_THROWS_AS(validateAdaptationRules(gap), InvalidPolicy);
    auto overlap = rules;
    overlap[0].upperMs = 320;
    CHECK_THROWS_AS(validateAdaptationRules(overlap), InvalidPolicy);
    auto bounded = rules;
    bounded[2].upperMs = 1000;
    CHECK_THROWS_AS(validateAdaptationRules(bounded), InvalidPolicy);
    auto dup = rules;
    dup[2].state = RttState::Warning;
    CHECK_THROWS_AS(validateAdaptationRules(dup), InvalidPolicy);
    auto shuffled = std::vector<AdaptationRule>{rules[2], rules[0], rules[1]};
    CHECK(validateAdaptationRules(shuffled) == rules);
}

TEST_CASE("classification rules") {
    auto req = TaggedRequest::fromWire("POST", "/postop/data", {{"X-Source-Id", "PostOp_Inj"}}, "", "1.2.3.4", "gw:80");
    CHECK(MatchCriterion{MatchField::Source, MatchKind::Exact, "PostOp_Inj"}.matches(req));
    CHECK_FALSE(MatchCriterion{MatchField::Source, MatchKind::Exact, "PostOp"}.matches(req));
    CHECK(MatchCriterion{MatchField::Source, MatchKind::Prefix, "PostOp"}.matches(req));
    CHECK(MatchCriterion{MatchField::Path, MatchKind::Prefix, "/postop/"}.matches(req));
    CHECK(MatchCriterion{MatchField::Destination, MatchKind::Exact, "gw:80"}.matches(req));
    ClassificationRule all{{}, "any"};
    CHECK(all.matches(req));
    ClassificationRule both{{{MatchField::Source, MatchKind::Exact, "PostOp_Inj"}, {MatchField::Path, MatchKind::Exact, "/x"}}, "c"};
    CHECK_FALSE(both.matches(req));

    MarkingPolicy m{{{"postop", Priority::High}}, Priority::Low};
    CHECK(m.priorityFor("postop") == Priority::High);
    CHECK(m.priorityFor("unknown") == Priority::Low);
}

TEST_CASE("policy JSON round trip (randomized)") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> pct(0, 100), delay(0, 5000), w(1, 16), bit(0, 1);
    for (int i = 0; i < 2000; ++i) {
        PepPolicy p;
        for (auto pr : kPrioritiesByPrecedence) {
            p.rejectionPct[pr] = pct(rng);
            p.delayMs[pr] = delay(rng);
            p.weights[pr] = w(rng);
        }
        p.discipline = bit(rng) ? Discipline::Wfq : Discipline::PriorityFirst;
        for (auto m : {Mechanism::Reject, Mechanism::Delay, Mechanism::Schedule}) {
            if (bit(rng)) p.enabled.insert(m);
        }
        Json j = p;
        CHECK(decodePepPolicy(Json::parse(j.dump())) == p);
    }
}

TEST_CASE("profile and rules JSON round trip") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> rate(0.1, 100);
    for (int i = 0; i < 500; ++i) {
        AppProfile p;
        p.name = "inj" + std::to_string(i);
        p.rate = rate(rng);
        p.arrival = static_cast<ArrivalModel>(i % 3);
        p.burstSize = 1 + i % 10;
        p.burstPeriodS = 0.5 + i % 4;
        if (i % 2) p.acceptableRttMs = 350;
        if (i % 3) p.acceptableLoss = 0.5;
        p.priorityHint = kPrioritiesByPrecedence[static_cast<std::size_t>(i % 3)];
        Json j = p;
        CHECK(decodeProfile(Json::parse(j.dump())) == p);
    }
    Json rj = defaultAdaptationRules();
    CHECK(decodeAdaptationRules(rj) == defaultAdaptationRules());
    CHECK(rj[2]["max_ms"].is_null());
}

TEST_CASE("JSON decoding rejects bad documents") {
    CHECK_THROWS_AS(decodePepPolicy(Json::parse(R"({"rejection": {"LOW": 120}})")), InvalidPolicy);
    CHECK_THROWS_AS(decodePepPolicy(Json::parse(R"({"enabled_mechanisms": ["TELEPORT"]})")), InvalidPolicy);
    CHECK_THROWS_AS(decodePepPolicy(Json::parse(R"({"rejection": "lots"})")), InvalidPolicy);
    CHECK_THROWS_AS(decodeProfile(Json::parse(R"({"name": "x", "rate": 0})")), InvalidPolicy);
    auto p = decodePepPolicy(Json::parse(R"({"enabled_mechanisms": ["REJECT"], "rejection": {"MEDIUM": 40, "PRIORITY_LOW": 80}})"));
    CHECK(p.enabled.contains(Mechanism::Reject));
    CHECK(p.rejectionPct[Priority::Medium] == 40);
    CHECK(p.rejectionPct[Priority::Low] == 80);
}

}
