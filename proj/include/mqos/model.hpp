#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mqos {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by the QoS pipeline.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedPriority : public Error {
public:
    explicit MalformedPriority(std::string_view value)
        : Error("malformed priority: '" + std::string(value) + "'") {}
};

/// A policy or rule set violated one of its invariants; field() names it.
class InvalidPolicy : public Error {
public:
    InvalidPolicy(std::string field, const std::string& what)
        : Error("invalid policy (" + field + "): " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// ---------------------------------------------------------------------------
// Wire constants
// ---------------------------------------------------------------------------

namespace headers {
inline constexpr std::string_view kTos = "TOS_HTTP";
inline constexpr std::string_view kSourceId = "X-Source-Id";
inline constexpr std::string_view kCmcClass = "X-CMC-Class";
/// Monotonic ns timestamp stamped by the first pipeline stage.
inline constexpr std::string_view kIngressNs = "X-QoS-Ingress-Ns";
/// Request-path time spent in CMC+PEP, excluding mechanism waits (µs).
inline constexpr std::string_view kOverheadUs = "X-QoS-Overhead-Us";
inline constexpr std::string_view kPepAction = "X-PEP-Action";
inline constexpr std::string_view kGwAction = "X-GW-Action";
} // namespace headers

// ---------------------------------------------------------------------------
// Priority
// ---------------------------------------------------------------------------

/// The TOS_HTTP mark. Enumerator values give the total order HIGH > MEDIUM > LOW.
enum class Priority : std::uint8_t { Low = 0, Medium = 1, High = 2 };

inline constexpr std::array<Priority, 3> kPrioritiesByPrecedence{
    Priority::High, Priority::Medium, Priority::Low};

constexpr std::size_t index(Priority p) noexcept { return static_cast<std::size_t>(p); }

/// Fixed-size table keyed by priority.
template <class T>
struct PerPriority {
    std::array<T, 3> values{};

    constexpr T& operator[](Priority p) noexcept { return values[index(p)]; }
    constexpr const T& operator[](Priority p) const noexcept { return values[index(p)]; }

    static constexpr PerPriority of(T high, T medium, T low) {
        PerPriority t;
        t[Priority::High] = high;
        t[Priority::Medium] = medium;
        t[Priority::Low] = low;
        return t;
    }

    friend bool operator==(const PerPriority&, const PerPriority&) = default;
};

/// PRIORITY_HIGH / PRIORITY_MEDIUM / PRIORITY_LOW
std::string_view toWire(Priority p) noexcept;
/// HIGH / MEDIUM / LOW
std::string_view shortName(Priority p) noexcept;
/// Exact wire string only; anything else throws MalformedPriority.
Priority parsePriority(std::string_view headerValue);
/// Accepts the wire form or the short form (config files).
Priority parsePriorityLoose(std::string_view value);

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

using HeaderList = std::vector<std::pair<std::string, std::string>>;

bool iequals(std::string_view a, std::string_view b) noexcept;

/// An HTTP request travelling through the pipeline. The priority field and
/// the TOS_HTTP header are kept in lockstep: neither can exist without the
/// other.
class TaggedRequest {
public:
    TaggedRequest() = default;

    /// Builds a request from what was received on the wire. A TOS_HTTP
    /// header with an unknown value is dropped so the request counts as
    /// unmarked.
    static TaggedRequest fromWire(std::string method, std::string target, HeaderList headers,
                                  std::string body, std::string peerAddress,
                                  std::string destination = {});

    std::string method = "POST";
    std::string target = "/";
    std::string body;
    /// X-Source-Id when supplied, otherwise the peer address.
    std::string sourceId;
    std::string destination;

    const HeaderList& headers() const noexcept { return headers_; }
    std::optional<std::string> header(std::string_view name) const;
    /// Sets or replaces a header. TOS_HTTP must go through mark().
    void setHeader(std::string_view name, std::string value);

    std::optional<Priority> priority() const noexcept { return priority_; }
    bool marked() const noexcept { return priority_.has_value(); }
    /// Stamps TOS_HTTP. Re-marking an already marked request is a logic error.
    void mark(Priority p);

    std::optional<std::int64_t> ingressNs() const noexcept { return ingressNs_; }
    /// Sets the ingress timestamp on first call only.
    void stampIngress(std::int64_t ns) noexcept {
        if (!ingressNs_) ingressNs_ = ns;
    }

    friend bool operator==(const TaggedRequest&, const TaggedRequest&) = default;

private:
    HeaderList headers_;
    std::optional<Priority> priority_;
    std::optional<std::int64_t> ingressNs_;
};

// ---------------------------------------------------------------------------
// Classification and marking
// ---------------------------------------------------------------------------

enum class MatchField : std::uint8_t { Source, Destination, Path };
enum class MatchKind : std::uint8_t { Exact, Prefix };

struct MatchCriterion {
    MatchField field = MatchField::Source;
    MatchKind kind = MatchKind::Exact;
    std::string value;

    bool matches(const TaggedRequest& req) const;
    friend bool operator==(const MatchCriterion&, const MatchCriterion&) = default;
};

/// Matches when every criterion holds. No criteria matches everything.
struct ClassificationRule {
    std::vector<MatchCriterion> criteria;
    std::string className;

    bool matches(const TaggedRequest& req) const;
    friend bool operator==(const ClassificationRule&, const ClassificationRule&) = default;
};

/// Ordered rules; defaultClass is the terminal rule that always matches.
struct ClassificationPolicy {
    std::vector<ClassificationRule> rules;
    std::string defaultClass = "default";

    friend bool operator==(const ClassificationPolicy&, const ClassificationPolicy&) = default;
};

struct MarkingPolicy {
    std::map<std::string, Priority> classToPriority;
    Priority defaultPriority = Priority::Low;

    Priority priorityFor(const std::string& className) const;
    friend bool operator==(const MarkingPolicy&, const MarkingPolicy&) = default;
};

// ---------------------------------------------------------------------------
// PEP policy
// ---------------------------------------------------------------------------

enum class Mechanism : std::uint8_t { Reject = 1, Delay = 2, Schedule = 4 };

std::string_view toString(Mechanism m) noexcept;
Mechanism parseMechanism(std::string_view s);

class MechanismSet {
public:
    constexpr MechanismSet() = default;
    constexpr MechanismSet(std::initializer_list<Mechanism> ms) {
        for (auto m : ms) insert(m);
    }
    constexpr void insert(Mechanism m) noexcept { bits_ |= static_cast<std::uint8_t>(m); }
    constexpr void erase(Mechanism m) noexcept { bits_ &= ~static_cast<std::uint8_t>(m); }
    constexpr bool contains(Mechanism m) const noexcept {
        return (bits_ & static_cast<std::uint8_t>(m)) != 0;
    }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    friend bool operator==(MechanismSet, MechanismSet) = default;

private:
    std::uint8_t bits_ = 0;
};

enum class Discipline : std::uint8_t { PriorityFirst, Wfq };

std::string_view toString(Discipline d) noexcept;
Discipline parseDiscipline(std::string_view s);

struct PepPolicy {
    PerPriority<int> rejectionPct{};
    PerPriority<int> delayMs{};
    Discipline discipline = Discipline::PriorityFirst;
    PerPriority<int> weights = PerPriority<int>::of(1, 1, 1);
    MechanismSet enabled;

    friend bool operator==(const PepPolicy&, const PepPolicy&) = default;
};

/// Returns the policy unchanged, or throws InvalidPolicy naming the field.
PepPolicy validatePolicy(PepPolicy p);

// ---------------------------------------------------------------------------
// Adaptation rules
// ---------------------------------------------------------------------------

enum class RttState : std::uint8_t { Normal = 0, Warning = 1, Critical = 2 };

std::string_view toString(RttState s) noexcept;
RttState parseRttState(std::string_view s);

/// One RTT band [lowerMs, upperMs) with the rejection it calls for. HIGH is
/// never rejected, so only MEDIUM and LOW percentages exist.
struct AdaptationRule {
    double lowerMs = 0;
    std::optional<double> upperMs; // nullopt: unbounded
    RttState state = RttState::Normal;
    int medRejection = 0;
    int lowRejection = 0;

    bool contains(double rttMs) const noexcept {
        return rttMs >= lowerMs && (!upperMs || rttMs < *upperMs);
    }
    friend bool operator==(const AdaptationRule&, const AdaptationRule&) = default;
};

/// [0,300) NORMAL 0/0, [300,400) WARNING 30/70, [400,inf) CRITICAL 40/80.
std::vector<AdaptationRule> defaultAdaptationRules();

/// Sorts by lower bound and checks the bands partition [0, inf) and that each
/// state appears once. Throws InvalidPolicy.
std::vector<AdaptationRule> validateAdaptationRules(std::vector<AdaptationRule> rules);

/// Rule whose band holds rttMs. Rules must be validated.
const AdaptationRule& ruleForRtt(const std::vector<AdaptationRule>& rules, double rttMs);

// ---------------------------------------------------------------------------
// Application profiles
// ---------------------------------------------------------------------------

enum class ArrivalModel : std::uint8_t { Periodic, Stochastic, Burst };

std::string_view toString(ArrivalModel m) noexcept;
ArrivalModel parseArrivalModel(std::string_view s);

struct AppProfile {
    std::string name;
    double rate = 1.0; // requests per second
    ArrivalModel arrival = ArrivalModel::Periodic;
    int burstSize = 1;
    double burstPeriodS = 1.0;
    std::optional<double> acceptableRttMs;
    std::optional<double> acceptableLoss;
    Priority priorityHint = Priority::Low;

    friend bool operator==(const AppProfile&, const AppProfile&) = default;
};

AppProfile validateProfile(AppProfile p);

} // namespace mqos
