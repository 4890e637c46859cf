#pragma once

// Control hierarchy: Condition/Action -> PlannedAction -> Manoeuvre ->
// FlightPlan -> AirspacePlan, plus nominal-plan construction, plan splicing
// and monotonic axis constraints.

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skylane/geometry.hpp"
#include "skylane/state.hpp"

namespace skylane {

class PlanError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a condition references an unknown aircraft or fix.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a plan or execution state breaks a structural invariant.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Axis { Lateral = 0, Vertical = 1, Speed = 2 };
inline constexpr std::array<Axis, 3> kAllAxes{Axis::Lateral, Axis::Vertical, Axis::Speed};
const char* to_string(Axis axis);
Axis axis_from_string(const std::string& s);

struct Condition {
    enum class Kind {
        Immediate,
        TimeReached,               // value = seconds
        AtFix,                     // ref = fix id, value = tolerance NM (distance to go)
        LateralSeparationExceeds,  // ref = other callsign, value = threshold NM
        AircraftPassedLaterally,   // ref = other callsign
        ReachedLevel,              // level_fl
        Not,
        And,
        Or,
    };

    Kind kind = Kind::Immediate;
    double value = 0.0;
    int level_fl = 0;
    std::string ref;
    std::vector<Condition> operands;

    static Condition immediate() { return {}; }
    static Condition never() { return negate(immediate()); }
    static Condition time_reached(double t);
    static Condition at_fix(std::string fix_id, double tolerance_nm);
    static Condition lateral_separation_exceeds(std::string other, double threshold_nm);
    static Condition passed_laterally(std::string other);
    static Condition reached_level(int fl);
    static Condition negate(Condition c);
    static Condition all_of(std::vector<Condition> cs);
    static Condition any_of(std::vector<Condition> cs);

    bool operator==(const Condition&) const = default;
};

const char* to_string(Condition::Kind kind);
std::string describe(const Condition& c);
// Throws PlanError on non-positive thresholds or empty composites.
void validate(const Condition& c);

struct Action {
    enum class Kind { ClimbTo, DescendTo, MaintainLevel, SetSpeed, FlyLane, ResumeNav };

    Kind kind = Kind::MaintainLevel;
    int level_fl = 0;
    double speed_kt = 0.0;
    std::string route_id;
    LaneSide side = LaneSide::Centre;
    std::string fix_id;

    static Action climb_to(int fl) { return {Kind::ClimbTo, fl, 0.0, {}, LaneSide::Centre, {}}; }
    static Action descend_to(int fl) { return {Kind::DescendTo, fl, 0.0, {}, LaneSide::Centre, {}}; }
    static Action maintain(int fl) { return {Kind::MaintainLevel, fl, 0.0, {}, LaneSide::Centre, {}}; }
    static Action set_speed(double kt) { return {Kind::SetSpeed, 0, kt, {}, LaneSide::Centre, {}}; }
    static Action fly_lane(std::string route, LaneSide side) {
        return {Kind::FlyLane, 0, 0.0, std::move(route), side, {}};
    }
    static Action resume_nav(std::string fix) { return {Kind::ResumeNav, 0, 0.0, {}, LaneSide::Centre, std::move(fix)}; }

    Axis axis() const;
    bool operator==(const Action&) const = default;
};

const char* to_string(Action::Kind kind);
Action::Kind action_kind_from_string(const std::string& s);
std::string describe(const Action& a);

enum class ActionStatus { Pending, Active, Complete };
const char* to_string(ActionStatus s);
ActionStatus action_status_from_string(const std::string& s);

struct PlannedAction {
    std::string id;
    Condition trigger;
    Action action;
    Condition completion;
    ActionStatus status = ActionStatus::Pending;
    std::string manoeuvre_id;

    Axis axis() const { return action.axis(); }
    bool operator==(const PlannedAction&) const = default;
};

struct Manoeuvre {
    std::string id;
    std::string strategy_id;
    std::map<std::string, std::string> parameters;
    std::vector<PlannedAction> phases;

    std::vector<Axis> axes() const;
    bool operator==(const Manoeuvre&) const = default;
};

struct ExitCondition {
    std::string fix_id;
    int level_fl = 0;
    bool operator==(const ExitCondition&) const = default;
};

// Provenance of a manoeuvre spliced into (or forming) a flight plan.
struct ManoeuvreRecord {
    std::string id;
    std::string strategy_id;
    std::map<std::string, std::string> parameters;
    bool operator==(const ManoeuvreRecord&) const = default;
};

struct FlightPlan {
    std::string callsign;
    std::string route_id;
    int pfl = 0;
    ExitCondition exit;
    bool exit_abandoned = false;
    std::array<std::vector<PlannedAction>, 3> chains;
    std::vector<ManoeuvreRecord> manoeuvres;
    int next_serial = 1;

    std::vector<PlannedAction>& chain(Axis a) { return chains[static_cast<std::size_t>(a)]; }
    const std::vector<PlannedAction>& chain(Axis a) const { return chains[static_cast<std::size_t>(a)]; }
    const PlannedAction* find(const std::string& id) const;
    std::string allocate_id(const std::string& tag);

    bool operator==(const FlightPlan&) const = default;
};

enum class AxisDirection { None, Left, Right, ClimbOnly, DescendOnly, SlowOnly, FastOnly };
const char* to_string(AxisDirection d);
AxisDirection axis_direction_from_string(const std::string& s);
bool opposes(AxisDirection a, AxisDirection b);

struct AxisConstraint {
    std::string callsign;
    Axis axis = Axis::Lateral;
    AxisDirection direction = AxisDirection::None;
    Condition release;  // the tau marker
    bool operator==(const AxisConstraint&) const = default;
};

// One aircraft/axis movement implied by a strategy instance.
struct AxisFootprint {
    std::string callsign;
    Axis axis = Axis::Lateral;
    AxisDirection direction = AxisDirection::None;
    bool operator==(const AxisFootprint&) const = default;
};

// Audit record of an applied strategy, kept on the airspace plan.
struct InterventionRecord {
    int revision = 0;
    std::string strategy_id;
    std::string label;
    std::vector<AxisFootprint> footprint;
    std::vector<AxisConstraint> constraints_in_force;
    bool operator==(const InterventionRecord&) const = default;
};

struct AirspacePlan {
    std::map<std::string, FlightPlan> plans;
    std::vector<AxisConstraint> constraints;
    std::vector<InterventionRecord> interventions;
    int revision = 0;

    const AxisConstraint* constraint(const std::string& callsign, Axis axis) const;
    bool operator==(const AirspacePlan&) const = default;
};

struct PerformanceParams {
    double climb_rate_fpm = 2000.0;
    double descent_rate_fpm = 2000.0;
    double level_tolerance_ft = 100.0;
};

struct EntryState {
    std::string callsign;
    std::string route_id;
    double altitude_ft = 0.0;
    double speed_kt = 480.0;
    double s = 0.0;  // along-track NM on the route centreline
};

// Descent distance (NM) needed to lose `feet` at `rate_fpm` and `speed_kt`.
double descent_distance_nm(double feet, double rate_fpm, double speed_kt);

// Nominal (efficiency-optimal) plan: own navigation along the route
// centreline, climb to or hold the preferred level, and descend as late as
// possible to meet the exit level. The speed chain is left empty. Throws
// PlanError when the exit level cannot be reached.
FlightPlan build_nominal_plan(const EntryState& entry, const Route& route, int pfl, const ExitCondition& exit,
                              const PerformanceParams& perf);

struct EvalContext {
    const AirspaceSnapshot& snapshot;
    const PairHistory& history;
    const LaneNetwork& lanes;
    double lateral_minimum_nm = 5.0;
    double level_tolerance_ft = 100.0;
};

// Evaluates `c` from the point of view of aircraft `owner`.
bool evaluate_condition(const Condition& c, const std::string& owner, const EvalContext& ctx);

// Replaces the causal planned actions with the manoeuvre's phases on their
// axes. Every other planned action keeps its id and content; the action that
// followed a replaced segment is re-triggered on the manoeuvre's final
// completion on that axis.
FlightPlan splice(const FlightPlan& fp, const std::vector<std::string>& causal_ids, const Manoeuvre& m);

// Appends the manoeuvre's phases to axes that have no open (non-Complete)
// action, e.g. speed control on an empty speed chain. Throws PlanError if an
// axis still has open actions.
FlightPlan append_phases(const FlightPlan& fp, const Manoeuvre& m);

// The Active planned action per axis, read from the execution statuses the
// twin writes into its plan copy. Axes whose chain is exhausted or not yet
// started are absent. Throws IntegrityError if two actions on one axis are
// Active.
std::map<Axis, PlannedAction> active_actions(const FlightPlan& fp);

// Direction of a movement; vertical/speed need the aircraft's reference value.
AxisDirection lateral_direction(LaneSide target);
AxisDirection vertical_direction(int target_fl, double reference_altitude_ft);
AxisDirection speed_direction(double target_kt, double reference_kt);

// A strategy candidate reduced to what the constraint filter needs.
struct ConstrainedCandidate {
    std::string label;
    std::vector<AxisFootprint> footprint;
};

// True if no footprint entry opposes a constraint on its (callsign, axis).
bool respects_constraints(const std::vector<AxisFootprint>& footprint, const std::vector<AxisConstraint>& constraints);
// If not respected, the human-readable reason.
std::optional<std::string> constraint_violation(const std::vector<AxisFootprint>& footprint,
                                                const std::vector<AxisConstraint>& constraints);

template <typename Candidate>
std::vector<Candidate> filter_by_axis_constraints(const std::vector<Candidate>& candidates,
                                                  const std::vector<AxisConstraint>& constraints) {
    std::vector<Candidate> out;
    for (const auto& c : candidates) {
        if (respects_constraints(c.footprint, constraints)) out.push_back(c);
    }
    return out;
}

// Adds or reinforces a constraint. A same-direction constraint is kept and its
// release widened to require both release conditions. Throws PlanError on an
// opposing direction.
void add_constraint(std::vector<AxisConstraint>& constraints, const AxisConstraint& c);

// Drops every constraint whose release condition now holds.
std::vector<AxisConstraint> release_constraints(const std::vector<AxisConstraint>& constraints,
                                                const AirspaceSnapshot& snap, const PairHistory& history,
                                                const LaneNetwork& lanes, double lateral_minimum_nm = 5.0);

}  // namespace skylane
