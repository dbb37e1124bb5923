#include "mqos/cmc.hpp"

#include "support.hpp"

#include "test.hpp"

using namespace mqos;

namespace {

CmcPolicy nursingPolicy() {
    CmcPolicy p;
    p.classification.rules = {
        {{{MatchField::Source, MatchKind::Exact, "PostOp_Inj"}}, "postop"},
        {{{MatchField::Source, MatchKind::Exact, "Loc_Inj"}}, "location"},
        {{{MatchField::Path, MatchKind::Prefix, "/postop/"}}, "postop-path"},
    };
    p.classification.defaultClass = "other";
    p.marking.classToPriority = {{"postop", Priority::High}, {"location", Priority::Medium}};
    p.marking.defaultPriority = Priority::Low;
    return p;
}

const std::string* find(const HeaderList& h, std::string_view name) {
    for (const auto& [k, v] : h) {
        if (iequals(k, name)) return &v;
    }
    return nullptr;
}

} // namespace

TEST_SUITE("cmc") {

TEST_CASE("classify takes the first matching rule") {
    auto pol = nursingPolicy();
    auto r = TaggedRequest::fromWire("POST", "/postop/data", {{"X-Source-Id", "PostOp_Inj"}}, "", "p");
    CHECK(cmc::classify(r, pol.classification) == "postop");
    auto l = TaggedRequest::fromWire("POST", "/postop/data", {{"X-Source-Id", "Loc_Inj"}}, "", "p");
    CHECK(cmc::classify(l, pol.classification) == "location");
    auto o = TaggedRequest::fromWire("POST", "/x/data", {{"X-Source-Id", "Food_Inj"}}, "", "p");
    CHECK(cmc::classify(o, pol.classification) == "other");
}

TEST_CASE("admit marks unmarked requests and leaves the rest alone") {
    cmc::CmcState st;
    st.policy = nursingPolicy();
    auto r = TaggedRequest::fromWire("POST", "/postop/data", {{"X-Source-Id", "PostOp_Inj"}, {"X-Custom", "1"}},
                                     R"({"hr":72})", "p");
    CHECK(cmc::receive(r, st) == cmc::Route::ToClassifier);
    auto out = cmc::admit(r, st, 1234);
    CHECK(out.priority() == Priority::High);
    CHECK(out.body == r.body);
    CHECK(out.header("X-Custom") == "1");
    CHECK(out.header("X-CMC-Class") == "postop");
    CHECK(out.ingressNs() == 1234);
    CHECK(out.header("X-QoS-Ingress-Ns") == "1234");

    SUBCASE("pre-marked request skips the classifier") {
        auto m = TaggedRequest::fromWire("POST", "/postop/data",
                                         {{"X-Source-Id", "PostOp_Inj"}, {"TOS_HTTP", "PRIORITY_LOW"}}, "", "p");
        CHECK(cmc::receive(m, st) == cmc::Route::ToForwarder);
        auto o = cmc::admit(m, st, 1);
        CHECK(o.priority() == Priority::Low);
        CHECK_FALSE(o.header("X-CMC-Class"));
    }
    SUBCASE("deactivated CMC forwards untouched") {
        st.activated = false;
        CHECK(cmc::receive(r, st) == cmc::Route::ToForwarder);
        CHECK_FALSE(cmc::admit(r, st, 1).marked());
    }
    SUBCASE("marking an already marked request is refused") {
        CHECK_THROWS(cmc::mark(out, "postop", st.policy.marking));
    }
}

TEST_CASE("proxy preserves payload and original headers") {
    testing::EchoServer pepSide, gatewaySide;
    cmc::CmcState st;
    st.policy = nursingPolicy();
    st.pep = pepSide.endpoint();
    st.gateway = gatewaySide.endpoint();
    cmc::CmcServer server(st, 8);
    server.start();

    std::string body = R"({"patient":"p-17","samples":[1,2,3],"note":"ünïcødé"})";
    auto res = testing::post(server.endpoint(), "/postop/data",
                             {{"X-Source-Id", "PostOp_Inj"}, {"X-Trace", "abc"}}, body);
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == body);
    auto seen = pepSide.seen();
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].body == body);
    CHECK(seen[0].path == "/postop/data");
    REQUIRE(find(seen[0].headers, "TOS_HTTP"));
    CHECK(*find(seen[0].headers, "TOS_HTTP") == "PRIORITY_HIGH");
    REQUIRE(find(seen[0].headers, "X-Trace"));
    CHECK(*find(seen[0].headers, "X-Trace") == "abc");
    CHECK(*find(seen[0].headers, "X-Source-Id") == "PostOp_Inj");

    server.setActivated(false);
    res = testing::post(server.endpoint(), "/loc/data", {{"X-Source-Id", "Loc_Inj"}}, body);
    REQUIRE(res);
    CHECK(res->status == 200);
    REQUIRE(gatewaySide.seen().size() == 1);
    CHECK_FALSE(find(gatewaySide.seen()[0].headers, "TOS_HTTP"));
    CHECK(pepSide.seen().size() == 1);

    auto stats = server.stats();
    CHECK(stats.received == 2);
    CHECK(stats.classified == 1);
}

TEST_CASE("admin policy endpoint") {
    testing::EchoServer up;
    cmc::CmcState st;
    st.pep = up.endpoint();
    st.gateway = up.endpoint();
    cmc::CmcServer server(st, 8);
    server.start();
    Json doc = nursingPolicy();
    auto r = httpJson(server.endpoint(), "PUT", "/admin/cmc/policy", doc);
    CHECK(r.status == 200);
    CHECK(server.state()->policy == nursingPolicy());
    auto bad = httpJson(server.endpoint(), "PUT", "/admin/cmc/policy", Json{{"rules", "nope"}});
    CHECK(bad.status == 400);
    CHECK(server.state()->policy == nursingPolicy());
    auto got = httpJson(server.endpoint(), "GET", "/admin/cmc/policy");
    CHECK(decode<CmcPolicy>(got.body) == nursingPolicy());
}

}
