#pragma once

#include "mqos/http.hpp"
#include "mqos/model.hpp"
#include "mqos/model_json.hpp"

#include <atomic>
#include <memory>
#include <mutex>

namespace mqos::cmc {

/// Snapshot of everything a request needs from the CMC. Replaced as a whole.
struct CmcState {
    bool activated = true;
    CmcPolicy policy;
    /// Next hop while activated (normally the PEP).
    Endpoint pep;
    /// Next hop while deactivated (the gateway).
    Endpoint gateway;

    const Endpoint& nextHop() const noexcept { return activated ? pep : gateway; }
};

enum class Route { ToClassifier, ToForwarder };

/// Marked requests and everything seen while deactivated skip the classifier.
Route receive(const TaggedRequest& req, const CmcState& state) noexcept;

/// First matching rule wins; the policy's default class terminates the list.
std::string classify(const TaggedRequest& req, const ClassificationPolicy& policy);

/// Stamps TOS_HTTP for className. req must be unmarked.
TaggedRequest mark(TaggedRequest req, const std::string& className, const MarkingPolicy& marking);

/// receive -> classify -> mark, without forwarding. Also stamps the ingress
/// time and the X-CMC-Class header when the classifier ran.
TaggedRequest admit(TaggedRequest req, const CmcState& state, std::int64_t nowNs);

struct CmcStats {
    std::uint64_t received = 0;
    std::uint64_t classified = 0;
    std::uint64_t passedMarked = 0;
    std::uint64_t upstreamErrors = 0;
};

/// HTTP front of the CMC.
///   any non-admin path           -> classify/mark, proxy to nextHop()
///   PUT  /admin/cmc/policy       -> replace rules + marking atomically
///   GET  /admin/cmc/policy
///   POST /admin/cmc/activate | /admin/cmc/deactivate
///   GET  /admin/cmc/stats
class CmcServer {
public:
    explicit CmcServer(CmcState initial, std::size_t threads = 128);

    void start(const std::string& host = "127.0.0.1", int port = 0) { http_.start(host, port); }
    void stop() { http_.stop(); }
    Endpoint endpoint() const { return http_.endpoint(); }

    std::shared_ptr<const CmcState> state() const;
    void setPolicy(CmcPolicy policy);
    void setActivated(bool on);
    void setHops(Endpoint pep, Endpoint gateway);
    CmcStats stats() const;

private:
    void update(const std::function<void(CmcState&)>& fn);

    mutable std::mutex mu_;
    std::shared_ptr<const CmcState> state_;
    std::atomic<std::uint64_t> received_{0}, classified_{0}, passedMarked_{0}, upstreamErrors_{0};
    HttpServer http_;
};

} // namespace mqos::cmc
