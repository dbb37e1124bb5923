#include "mqos/cmc.hpp"

#include "http_internal.hpp"

namespace mqos::cmc {

Route receive(const TaggedRequest& req, const CmcState& state) noexcept {
    return (req.marked() || !state.activated) ? Route::ToForwarder : Route::ToClassifier;
}

std::string classify(const TaggedRequest& req, const ClassificationPolicy& policy) {
    for (const auto& rule : policy.rules) {
        if (rule.matches(req)) return rule.className;
    }
    return policy.defaultClass;
}

TaggedRequest mark(TaggedRequest req, const std::string& className, const MarkingPolicy& marking) {
    req.mark(marking.priorityFor(className));
    return req;
}

TaggedRequest admit(TaggedRequest req, const CmcState& state, std::int64_t nowNs) {
    if (auto stamped = req.header(headers::kIngressNs)) {
        try {
            req.stampIngress(std::stoll(*stamped));
        } catch (const std::exception&) {
            req.setHeader(headers::kIngressNs, std::to_string(nowNs));
            req.stampIngress(nowNs);
        }
    } else {
        req.stampIngress(nowNs);
        req.setHeader(headers::kIngressNs, std::to_string(nowNs));
    }
    if (receive(req, state) == Route::ToForwarder) return req;

    auto cls = classify(req, state.policy.classification);
    req = mark(std::move(req), cls, state.policy.marking);
    req.setHeader(headers::kCmcClass, cls);
    return req;
}

CmcServer::CmcServer(CmcState initial, std::size_t threads)
    : state_(std::make_shared<const CmcState>(std::move(initial))), http_(threads) {
    auto& srv = http_.routes();

    srv.Put("/admin/cmc/policy", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = detail::parseBody(req, res);
        if (!body) return;
        try {
            setPolicy(decode<CmcPolicy>(*body));
            detail::replyJson(res, state()->policy);
        } catch (const Error& e) {
            detail::replyError(res, 400, e.what());
        }
    });
    srv.Get("/admin/cmc/policy", [this](const httplib::Request&, httplib::Response& res) {
        auto st = state();
        Json j = st->policy;
        j["activated"] = st->activated;
        detail::replyJson(res, j);
    });
    srv.Post("/admin/cmc/activate", [this](const httplib::Request&, httplib::Response& res) {
        setActivated(true);
        detail::replyJson(res, {{"activated", true}});
    });
    srv.Post("/admin/cmc/deactivate", [this](const httplib::Request&, httplib::Response& res) {
        setActivated(false);
        detail::replyJson(res, {{"activated", false}});
    });
    srv.Get("/admin/cmc/stats", [this](const httplib::Request&, httplib::Response& res) {
        auto s = stats();
        detail::replyJson(res, {{"received", s.received},
                                {"classified", s.classified},
                                {"passed_marked", s.passedMarked},
                                {"upstream_errors", s.upstreamErrors},
                                {"activated", state()->activated}});
    });

    auto proxy = [this](const httplib::Request& in, httplib::Response& res) {
        auto now = monotonicNs();
        auto st = state(); // the whole request runs under this snapshot
        received_++;
        auto req = detail::fromHttplib(in);
        if (receive(req, *st) == Route::ToClassifier) classified_++;
        else if (req.marked()) passedMarked_++;
        req = admit(std::move(req), *st, now);

        auto upstream = forward(st->nextHop(), req);
        if (upstream.transportError) upstreamErrors_++;
        detail::relay(upstream, res);
    };
    const char* pattern = R"(/(?!admin/).*)";
    srv.Get(pattern, proxy);
    srv.Post(pattern, proxy);
    srv.Put(pattern, proxy);
    srv.Delete(pattern, proxy);
    srv.Patch(pattern, proxy);
}

std::shared_ptr<const CmcState> CmcServer::state() const {
    std::lock_guard lk(mu_);
    return state_;
}

void CmcServer::update(const std::function<void(CmcState&)>& fn) {
    std::lock_guard lk(mu_);
    auto next = std::make_shared<CmcState>(*state_);
    fn(*next);
    state_ = std::move(next);
}

void CmcServer::setPolicy(CmcPolicy policy) {
    update([&](CmcState& s) { s.policy = std::move(policy); });
}

void CmcServer::setActivated(bool on) {
    update([&](CmcState& s) { s.activated = on; });
}

void CmcServer::setHops(Endpoint pep, Endpoint gateway) {
    update([&](CmcState& s) {
        s.pep = std::move(pep);
        s.gateway = std::move(gateway);
    });
}

CmcStats CmcServer::stats() const {
    return {received_.load(), classified_.load(), passedMarked_.load(), upstreamErrors_.load()};
}

} // namespace mqos::cmc
