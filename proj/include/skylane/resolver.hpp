#pragma once

// Causal attribution, the ranked strategy library, depth-limited backtracking
// search with greedy acceptance, and the safe-level fallback.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skylane/conflict.hpp"
#include "skylane/plans.hpp"
#include "skylane/twin.hpp"

namespace skylane {

enum class StrategyId { LateralOffset, LevelDescent, LevelClimb, ExchangeLevels, SpeedTrail, Additional };
const char* to_string(StrategyId id);
StrategyId strategy_id_from_string(const std::string& s);
// Rank in the library (1 = highest).
int strategy_priority(StrategyId id);
const char* strategy_title(StrategyId id);

// Ordered strategy list per conflict class.
class StrategyLibrary {
public:
    // The shipped mapping for all 36 classes.
    static StrategyLibrary standard();

    const std::vector<StrategyId>& strategies(const ConflictClass& c) const;
    void set(const ConflictClass& c, std::vector<StrategyId> order);

private:
    std::array<std::vector<StrategyId>, 36> table_;
};

struct StrategyParams {
    bool lateral_resume = true;
    std::vector<int> level_steps{1, 2};  // multiples of 1000 ft beyond the conflict level
    double trail_gap_nm = 10.0;
    double trail_speed_delta_kt = 10.0;
};

struct SearchParams {
    int d_max = 3;
    int branching_cap = 24;  // concrete candidates tried per conflict
    int node_budget = 20000;  // strategy applications per search
};

// Per callsign, the causal planned-action id on each axis.
struct Attribution {
    std::map<std::string, std::map<Axis, std::string>> causal;

    const std::string& id(const std::string& callsign, Axis axis) const;
    bool has(const std::string& callsign, Axis axis) const;
};

// The actions active at the conflict's first violation time in its source
// rollout. Lateral and vertical are required (IntegrityError otherwise);
// speed is included when present.
Attribution attribute_cause(const ConflictRecord& conflict, const AirspacePlan& plan, const RolloutSet& rollouts);

// One concrete, parameterised instance of a library strategy.
struct StrategyCandidate {
    StrategyId strategy = StrategyId::LateralOffset;
    std::string label;
    std::map<std::string, std::string> parameters;
    std::vector<AxisFootprint> footprint;
    std::map<std::string, Manoeuvre> manoeuvres;  // by callsign; phase ids assigned on splice
    std::vector<AxisConstraint> constraints;
};

// Everything candidate generation looks at.
struct CandidateContext {
    const ConflictRecord& conflict;
    const Attribution& attribution;
    const AirspacePlan& plan;
    const World& world;
    const RolloutSet& rollouts;
    const LaneNetwork& lanes;
    const TwinConfig& twin;
};

std::vector<StrategyId> get_strategies(const ConflictClass& c, const StrategyLibrary& library);

// Concrete candidates in library order, before constraint filtering.
std::vector<StrategyCandidate> expand_candidates(const CandidateContext& ctx, const StrategyLibrary& library,
                                                 const StrategyParams& params);

// Splices every manoeuvre of the candidate, registers its constraints and
// appends an intervention record. The result carries `revision`.
AirspacePlan apply_strategy(const AirspacePlan& plan, const StrategyCandidate& candidate,
                            const ConflictRecord& conflict, const Attribution& attribution, int revision);

enum class NodeOutcome { Accepted, Rejected, Backtracked, DepthLimit, BudgetExhausted, AttributionFailed };
const char* to_string(NodeOutcome o);

struct FilteredCandidate {
    std::string label;
    std::string reason;
};

struct TraceNode {
    int id = 0;
    int parent = -1;
    int depth = 0;
    int revision = 0;
    std::string strategy;  // label of the strategy that produced this node; empty at the root
    StrategyId strategy_id = StrategyId::Additional;
    int tsr_size = 0;
    std::optional<ConflictRecord> conflict;  // the conflict addressed at this node
    std::vector<std::string> tried;          // candidate labels, in order
    std::vector<FilteredCandidate> filtered;
    std::vector<int> children;
    NodeOutcome outcome = NodeOutcome::Rejected;
};

struct DecisionTrace {
    std::vector<TraceNode> nodes;
    std::vector<int> accepted_path;  // node ids from the root to the accepted leaf

    int depth() const { return accepted_path.empty() ? 0 : static_cast<int>(accepted_path.size()) - 1; }
    int max_depth() const;
    std::vector<std::string> applied_strategies() const;
};

struct SearchStats {
    int expansions = 0;
    int simulations = 0;
    int expansion_bound = 0;  // sum of B^i for i = 1..d_max
    int branching = 0;        // largest candidate list actually tried
    bool budget_exhausted = false;
};

struct Alert {
    enum class Level { Fallback, Escalated };
    Level level = Level::Fallback;
    std::string message;
    std::vector<std::string> callsigns;
};

struct Resolution {
    enum class Outcome { Solved, Fallback, Escalated };
    Outcome outcome = Outcome::Solved;
    AirspacePlan plan;
    std::optional<Alert> alert;
    DecisionTrace trace;
    SearchStats stats;
    TechnicalSafetyRecord root_tsr;
    TechnicalSafetyRecord final_tsr;
};
const char* to_string(Resolution::Outcome o);

struct FallbackResult {
    AirspacePlan plan;
    Alert alert;
    bool applied = false;
    std::map<std::string, int> assigned_levels;
};

// Levels (FL) commanded or held anywhere in the plan or the current state.
std::vector<int> occupied_levels(const AirspacePlan& plan, const World& world);

// Sends the conflict pair to the nearest unoccupied levels and abandons their
// exit coordination. Escalates, leaving the plan unchanged, when fewer than
// two free levels exist in the sector band.
FallbackResult fallback(const AirspacePlan& plan, const ConflictRecord& conflict, const World& world,
                        const TwinConfig& twin, int revision);

struct ResolverConfig {
    SearchParams search;
    StrategyParams strategy;
    EnsembleConfig ensemble;
    SeparationMinima minima;
    ClassThresholds thresholds;
    TwinConfig twin;
    bool parallel = true;
};

class Resolver {
public:
    Resolver(const LaneNetwork& lanes, ResolverConfig cfg, StrategyLibrary library = StrategyLibrary::standard());

    // Ensemble-simulates the world under `plan` and detects conflicts.
    TechnicalSafetyRecord simulate_and_detect(const World& world, const AirspacePlan& plan,
                                              RolloutSet* rollouts_out = nullptr) const;

    // Candidates for the earliest conflict of `plan`, filtered and capped as the
    // search would see them. Empty if the plan is safe.
    struct Expansion {
        std::optional<ConflictRecord> conflict;
        std::optional<Attribution> attribution;
        std::vector<StrategyCandidate> candidates;
        std::vector<FilteredCandidate> filtered;
        TechnicalSafetyRecord tsr;
    };
    Expansion expand(const World& world, const AirspacePlan& plan) const;

    // Full search from the world's current plan, with fallback on failure.
    Resolution resolve(const World& world) const;

    const ResolverConfig& config() const { return cfg_; }
    const StrategyLibrary& library() const { return library_; }
    const LaneNetwork& lanes() const { return lanes_; }

private:
    const LaneNetwork& lanes_;
    ResolverConfig cfg_;
    StrategyLibrary library_;
};

}  // namespace skylane
