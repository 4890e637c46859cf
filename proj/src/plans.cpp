#include "skylane/plans.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace skylane {

const char* to_string(Axis axis) {
    switch (axis) {
    case Axis::Lateral: return "Lateral";
    case Axis::Vertical: return "Vertical";
    default: return "Speed";
    }
}

Axis axis_from_string(const std::string& s) {
    if (s == "Lateral") return Axis::Lateral;
    if (s == "Vertical") return Axis::Vertical;
    if (s == "Speed") return Axis::Speed;
    throw PlanError("unknown axis '" + s + "'");
}

Condition Condition::time_reached(double t) {
    Condition c;
    c.kind = Kind::TimeReached;
    c.value = t;
    return c;
}

Condition Condition::at_fix(std::string fix_id, double tolerance_nm) {
    Condition c;
    c.kind = Kind::AtFix;
    c.ref = std::move(fix_id);
    c.value = tolerance_nm;
    return c;
}

Condition Condition::lateral_separation_exceeds(std::string other, double threshold_nm) {
    Condition c;
    c.kind = Kind::LateralSeparationExceeds;
    c.ref = std::move(other);
    c.value = threshold_nm;
    return c;
}

Condition Condition::passed_laterally(std::string other) {
    Condition c;
    c.kind = Kind::AircraftPassedLaterally;
    c.ref = std::move(other);
    return c;
}

Condition Condition::reached_level(int fl) {
    Condition c;
    c.kind = Kind::ReachedLevel;
    c.level_fl = fl;
    return c;
}

Condition Condition::negate(Condition inner) {
    Condition c;
    c.kind = Kind::Not;
    c.operands.push_back(std::move(inner));
    return c;
}

Condition Condition::all_of(std::vector<Condition> cs) {
    if (cs.size() == 1) return std::move(cs.front());
    Condition c;
    c.kind = Kind::And;
    c.operands = std::move(cs);
    return c;
}

Condition Condition::any_of(std::vector<Condition> cs) {
    if (cs.size() == 1) return std::move(cs.front());
    Condition c;
    c.kind = Kind::Or;
    c.operands = std::move(cs);
    return c;
}

const char* to_string(Condition::Kind kind) {
    using K = Condition::Kind;
    switch (kind) {
    case K::Immediate: return "Immediate";
    case K::TimeReached: return "TimeReached";
    case K::AtFix: return "AtFix";
    case K::LateralSeparationExceeds: return "LateralSeparationExceeds";
    case K::AircraftPassedLaterally: return "AircraftPassedLaterally";
    case K::ReachedLevel: return "ReachedLevel";
    case K::Not: return "Not";
    case K::And: return "And";
    default: return "Or";
    }
}

std::string describe(const Condition& c) {
    using K = Condition::Kind;
    std::ostringstream os;
    switch (c.kind) {
    case K::Immediate: os << "Immediate"; break;
    case K::TimeReached: os << "T >= " << c.value << "s"; break;
    case K::AtFix: os << "AtFix(" << c.ref << ", " << c.value << "NM)"; break;
    case K::LateralSeparationExceeds: os << "LatSep(" << c.ref << ") > " << c.value << "NM"; break;
    case K::AircraftPassedLaterally: os << "AircraftPassedLaterally(" << c.ref << ")"; break;
    case K::ReachedLevel: os << "ReachedLevel(FL" << c.level_fl << ")"; break;
    case K::Not:
        if (c.operands.size() == 1 && c.operands[0].kind == K::Immediate) {
            os << "Never";
        } else {
            os << "Not(" << describe(c.operands.at(0)) << ")";
        }
        break;
    case K::And:
    case K::Or: {
        os << (c.kind == K::And ? "And(" : "Or(");
        for (std::size_t i = 0; i < c.operands.size(); ++i) {
            if (i) os << ", ";
            os << describe(c.operands[i]);
        }
        os << ")";
        break;
    }
    }
    return os.str();
}

void validate(const Condition& c) {
    using K = Condition::Kind;
    switch (c.kind) {
    case K::LateralSeparationExceeds:
        if (!(c.value > 0.0)) throw PlanError("separation threshold must be > 0");
        if (c.ref.empty()) throw PlanError("separation condition needs another aircraft");
        break;
    case K::AtFix:
        if (!(c.value >= 0.0)) throw PlanError("fix tolerance must be >= 0");
        if (c.ref.empty()) throw PlanError("AtFix needs a fix id");
        break;
    case K::AircraftPassedLaterally:
        if (c.ref.empty()) throw PlanError("AircraftPassedLaterally needs another aircraft");
        break;
    case K::Not:
        if (c.operands.size() != 1) throw PlanError("Not takes exactly one operand");
        break;
    case K::And:
    case K::Or:
        if (c.operands.empty()) throw PlanError("empty composite condition");
        break;
    default: break;
    }
    for (const auto& o : c.operands) validate(o);
}

Axis Action::axis() const {
    switch (kind) {
    case Kind::FlyLane:
    case Kind::ResumeNav: return Axis::Lateral;
    case Kind::SetSpeed: return Axis::Speed;
    default: return Axis::Vertical;
    }
}

const char* to_string(Action::Kind kind) {
    using K = Action::Kind;
    switch (kind) {
    case K::ClimbTo: return "ClimbTo";
    case K::DescendTo: return "DescendTo";
    case K::MaintainLevel: return "MaintainLevel";
    case K::SetSpeed: return "SetSpeed";
    case K::FlyLane: return "FlyLane";
    default: return "ResumeNav";
    }
}

Action::Kind action_kind_from_string(const std::string& s) {
    using K = Action::Kind;
    for (K k : {K::ClimbTo, K::DescendTo, K::MaintainLevel, K::SetSpeed, K::FlyLane, K::ResumeNav}) {
        if (s == to_string(k)) return k;
    }
    throw PlanError("unknown action kind '" + s + "'");
}

std::string describe(const Action& a) {
    using K = Action::Kind;
    std::ostringstream os;
    switch (a.kind) {
    case K::ClimbTo: os << "Climb FL" << a.level_fl; break;
    case K::DescendTo: os << "Descend FL" << a.level_fl; break;
    case K::MaintainLevel: os << "Maintain FL" << a.level_fl; break;
    case K::SetSpeed: os << "Speed " << a.speed_kt << "kt"; break;
    case K::FlyLane: os << "Fly " << to_string(a.side) << " lane " << a.route_id; break;
    case K::ResumeNav: os << "Resume own navigation " << a.fix_id; break;
    }
    return os.str();
}

const char* to_string(ActionStatus s) {
    switch (s) {
    case ActionStatus::Pending: return "Pending";
    case ActionStatus::Active: return "Active";
    default: return "Complete";
    }
}

ActionStatus action_status_from_string(const std::string& s) {
    if (s == "Pending") return ActionStatus::Pending;
    if (s == "Active") return ActionStatus::Active;
    if (s == "Complete") return ActionStatus::Complete;
    throw PlanError("unknown action status '" + s + "'");
}

std::vector<Axis> Manoeuvre::axes() const {
    std::vector<Axis> out;
    for (const auto& p : phases) {
        if (std::find(out.begin(), out.end(), p.axis()) == out.end()) out.push_back(p.axis());
    }
    std::sort(out.begin(), out.end());
    return out;
}

const PlannedAction* FlightPlan::find(const std::string& id) const {
    for (const auto& ch : chains)
        for (const auto& pa : ch)
            if (pa.id == id) return &pa;
    return nullptr;
}

std::string FlightPlan::allocate_id(const std::string& tag) {
    return callsign + ":" + tag + std::to_string(next_serial++);
}

const char* to_string(AxisDirection d) {
    switch (d) {
    case AxisDirection::Left: return "Left";
    case AxisDirection::Right: return "Right";
    case AxisDirection::ClimbOnly: return "ClimbOnly";
    case AxisDirection::DescendOnly: return "DescendOnly";
    case AxisDirection::SlowOnly: return "SlowOnly";
    case AxisDirection::FastOnly: return "FastOnly";
    default: return "None";
    }
}

AxisDirection axis_direction_from_string(const std::string& s) {
    for (auto d : {AxisDirection::None, AxisDirection::Left, AxisDirection::Right, AxisDirection::ClimbOnly,
                   AxisDirection::DescendOnly, AxisDirection::SlowOnly, AxisDirection::FastOnly}) {
        if (s == to_string(d)) return d;
    }
    throw PlanError("unknown axis direction '" + s + "'");
}

bool opposes(AxisDirection a, AxisDirection b) {
    using D = AxisDirection;
    auto pair = [&](D x, D y) { return (a == x && b == y) || (a == y && b == x); };
    return pair(D::Left, D::Right) || pair(D::ClimbOnly, D::DescendOnly) || pair(D::SlowOnly, D::FastOnly);
}

const AxisConstraint* AirspacePlan::constraint(const std::string& callsign, Axis axis) const {
    for (const auto& c : constraints)
        if (c.callsign == callsign && c.axis == axis) return &c;
    return nullptr;
}

double descent_distance_nm(double feet, double rate_fpm, double speed_kt) {
    if (feet <= 0.0) return 0.0;
    return feet / rate_fpm * speed_kt / 60.0;
}

FlightPlan build_nominal_plan(const EntryState& entry, const Route& route, int pfl, const ExitCondition& exit,
                              const PerformanceParams& perf) {
    validate_route(route);
    const int exit_idx = route.fix_index(exit.fix_id);
    if (exit_idx < 0) throw PlanError("exit fix " + exit.fix_id + " is not on route " + route.id);
    if (pfl < exit.level_fl) {
        throw PlanError(entry.callsign + ": preferred level FL" + std::to_string(pfl) + " below exit level FL" +
                        std::to_string(exit.level_fl));
    }
    double exit_s = 0.0;
    for (int i = 1; i <= exit_idx; ++i) exit_s += distance(route.fixes[i - 1].position, route.fixes[i].position);
    const double remaining = exit_s - entry.s;
    if (remaining < -1e-9) throw PlanError(entry.callsign + " is already past exit fix " + exit.fix_id);

    const double cruise_ft = pfl * kFeetPerFlightLevel;
    const double exit_ft = exit.level_fl * kFeetPerFlightLevel;
    const double tol = perf.level_tolerance_ft;
    const double alt = entry.altitude_ft;

    double transition_nm = 0.0;
    if (alt < cruise_ft - tol) {
        transition_nm = descent_distance_nm(cruise_ft - alt, perf.climb_rate_fpm, entry.speed_kt);
    } else if (alt > cruise_ft + tol) {
        transition_nm = descent_distance_nm(alt - cruise_ft, perf.descent_rate_fpm, entry.speed_kt);
    }
    const double tod_nm = descent_distance_nm(cruise_ft - exit_ft, perf.descent_rate_fpm, entry.speed_kt);
    if (transition_nm + tod_nm > remaining + 1e-9) {
        throw PlanError(entry.callsign + ": exit FL" + std::to_string(exit.level_fl) + " at " + exit.fix_id +
                        " unreachable at the nominal descent rate");
    }

    FlightPlan fp;
    fp.callsign = entry.callsign;
    fp.route_id = route.id;
    fp.pfl = pfl;
    fp.exit = exit;
    const std::string mid = entry.callsign + ":nominal";
    fp.manoeuvres.push_back({mid, "nominal", {}});

    auto push = [&](Axis axis, Condition trig, Action act, Condition comp) {
        PlannedAction pa;
        pa.id = fp.allocate_id("N");
        pa.trigger = std::move(trig);
        pa.action = std::move(act);
        pa.completion = std::move(comp);
        pa.manoeuvre_id = mid;
        fp.chain(axis).push_back(std::move(pa));
    };

    const Condition at_exit = Condition::at_fix(exit.fix_id, 0.0);
    push(Axis::Lateral, Condition::immediate(), Action::resume_nav(exit.fix_id), at_exit);

    Condition cruise_trigger = Condition::immediate();
    if (alt < cruise_ft - tol) {
        push(Axis::Vertical, Condition::immediate(), Action::climb_to(pfl), Condition::reached_level(pfl));
        cruise_trigger = Condition::reached_level(pfl);
    } else if (alt > cruise_ft + tol) {
        push(Axis::Vertical, Condition::immediate(), Action::descend_to(pfl), Condition::reached_level(pfl));
        cruise_trigger = Condition::reached_level(pfl);
    }
    if (pfl > exit.level_fl) {
        const Condition tod = Condition::at_fix(exit.fix_id, tod_nm);
        push(Axis::Vertical, cruise_trigger, Action::maintain(pfl), tod);
        push(Axis::Vertical, tod, Action::descend_to(exit.level_fl), Condition::reached_level(exit.level_fl));
        push(Axis::Vertical, Condition::reached_level(exit.level_fl), Action::maintain(exit.level_fl), at_exit);
    } else {
        push(Axis::Vertical, cruise_trigger, Action::maintain(pfl), at_exit);
    }
    return fp;
}

namespace {

const AircraftState& owner_state(const std::string& owner, const EvalContext& ctx) {
    const auto* st = ctx.snapshot.find(owner);
    if (!st) throw EvaluationError("condition owner " + owner + " is not in the airspace");
    return *st;
}

}  // namespace

bool evaluate_condition(const Condition& c, const std::string& owner, const EvalContext& ctx) {
    using K = Condition::Kind;
    switch (c.kind) {
    case K::Immediate: return true;
    case K::TimeReached: return ctx.snapshot.time >= c.value - 1e-9;
    case K::AtFix: {
        const auto& st = owner_state(owner, ctx);
        const Route& route = ctx.lanes.route(st.route_id);
        const int idx = route.fix_index(c.ref);
        if (idx < 0) throw EvaluationError("fix " + c.ref + " is not on route " + st.route_id + " of " + owner);
        const Lane& lane = ctx.lanes.lane(st.route_id, st.lane);
        const double to_go = lane.vertex_s()[static_cast<std::size_t>(idx)] - st.s;
        return to_go <= c.value + 1e-9;
    }
    case K::LateralSeparationExceeds: {
        const auto& st = owner_state(owner, ctx);
        if (const auto* other = ctx.snapshot.find(c.ref)) return distance(st.position, other->position) > c.value;
        if (ctx.snapshot.has_departed(c.ref)) return true;
        throw EvaluationError("unknown aircraft " + c.ref);
    }
    case K::AircraftPassedLaterally: {
        const auto& st = owner_state(owner, ctx);
        if (const auto* other = ctx.snapshot.find(c.ref)) {
            const auto* rec = ctx.history.find(owner, c.ref);
            if (!rec || !rec->passed) return false;
            const AircraftState& ref = rec->reference == owner ? st : *other;
            const AircraftState& mov = rec->reference == owner ? *other : st;
            const Lane& lane = ctx.lanes.lane(ref.route_id, ref.lane);
            return std::abs(along_track(lane, mov.position).s - ref.s) >= ctx.lateral_minimum_nm;
        }
        if (ctx.snapshot.has_departed(c.ref)) return true;
        throw EvaluationError("unknown aircraft " + c.ref);
    }
    case K::ReachedLevel: {
        const auto& st = owner_state(owner, ctx);
        return std::abs(st.altitude_ft - c.level_fl * kFeetPerFlightLevel) <= ctx.level_tolerance_ft;
    }
    case K::Not: return !evaluate_condition(c.operands.at(0), owner, ctx);
    case K::And:
        for (const auto& o : c.operands)
            if (!evaluate_condition(o, owner, ctx)) return false;
        return true;
    case K::Or:
        for (const auto& o : c.operands)
            if (evaluate_condition(o, owner, ctx)) return true;
        return false;
    }
    return false;
}

FlightPlan splice(const FlightPlan& fp, const std::vector<std::string>& causal_ids, const Manoeuvre& m) {
    if (m.phases.empty()) throw PlanError("splice: manoeuvre " + m.strategy_id + " has no phases");
    if (causal_ids.empty()) throw PlanError("splice: no causal actions given");

    std::array<int, 3> causal_index{-1, -1, -1};
    for (const auto& id : causal_ids) {
        bool found = false;
        for (Axis axis : kAllAxes) {
            const auto& ch = fp.chain(axis);
            for (std::size_t i = 0; i < ch.size(); ++i) {
                if (ch[i].id != id) continue;
                auto& slot = causal_index[static_cast<std::size_t>(axis)];
                if (slot >= 0) throw PlanError("splice: two causal actions on the " + std::string(to_string(axis)) + " axis");
                slot = static_cast<int>(i);
                found = true;
            }
        }
        if (!found) throw PlanError("splice: causal action " + id + " not found in plan of " + fp.callsign);
    }

    std::set<Axis> causal_axes;
    for (Axis axis : kAllAxes)
        if (causal_index[static_cast<std::size_t>(axis)] >= 0) causal_axes.insert(axis);
    const auto m_axes = m.axes();
    if (std::set<Axis>(m_axes.begin(), m_axes.end()) != causal_axes) {
        throw PlanError("splice: manoeuvre " + m.strategy_id + " axis footprint does not match the causal segments");
    }

    FlightPlan out = fp;
    const std::string mid = m.id.empty() ? out.allocate_id("M") : m.id;
    out.manoeuvres.push_back({mid, m.strategy_id, m.parameters});

    for (Axis axis : causal_axes) {
        const auto idx = static_cast<std::size_t>(causal_index[static_cast<std::size_t>(axis)]);
        auto& ch = out.chain(axis);
        std::vector<PlannedAction> replacement;
        for (const auto& ph : m.phases) {
            if (ph.axis() != axis) continue;
            PlannedAction pa = ph;
            if (pa.id.empty()) pa.id = out.allocate_id("S");
            pa.status = ActionStatus::Pending;
            pa.manoeuvre_id = mid;
            validate(pa.trigger);
            validate(pa.completion);
            replacement.push_back(std::move(pa));
        }
        std::vector<PlannedAction> rebuilt(ch.begin(), ch.begin() + static_cast<std::ptrdiff_t>(idx));
        rebuilt.insert(rebuilt.end(), replacement.begin(), replacement.end());
        const std::size_t downstream = rebuilt.size();
        rebuilt.insert(rebuilt.end(), ch.begin() + static_cast<std::ptrdiff_t>(idx) + 1, ch.end());
        if (downstream < rebuilt.size()) rebuilt[downstream].trigger = replacement.back().completion;
        ch = std::move(rebuilt);
    }
    return out;
}

FlightPlan append_phases(const FlightPlan& fp, const Manoeuvre& m) {
    if (m.phases.empty()) throw PlanError("append: manoeuvre " + m.strategy_id + " has no phases");
    FlightPlan out = fp;
    const std::string mid = m.id.empty() ? out.allocate_id("M") : m.id;
    out.manoeuvres.push_back({mid, m.strategy_id, m.parameters});
    for (const auto& ph : m.phases) {
        const auto& ch = out.chain(ph.axis());
        if (std::any_of(ch.begin(), ch.end(), [](const PlannedAction& pa) { return pa.status != ActionStatus::Complete; })) {
            throw PlanError("append: " + fp.callsign + " still has open actions on the " + to_string(ph.axis()) + " axis");
        }
    }
    for (const auto& ph : m.phases) {
        PlannedAction pa = ph;
        if (pa.id.empty()) pa.id = out.allocate_id("S");
        pa.status = ActionStatus::Pending;
        pa.manoeuvre_id = mid;
        validate(pa.trigger);
        validate(pa.completion);
        out.chain(pa.axis()).push_back(std::move(pa));
    }
    return out;
}

std::map<Axis, PlannedAction> active_actions(const FlightPlan& fp) {
    std::map<Axis, PlannedAction> out;
    for (Axis axis : kAllAxes) {
        for (const auto& pa : fp.chain(axis)) {
            if (pa.status != ActionStatus::Active) continue;
            if (out.count(axis)) {
                throw IntegrityError(fp.callsign + ": two Active actions on the " + std::string(to_string(axis)) + " axis");
            }
            out.emplace(axis, pa);
        }
    }
    return out;
}

AxisDirection lateral_direction(LaneSide target) {
    switch (target) {
    case LaneSide::Left: return AxisDirection::Left;
    case LaneSide::Right: return AxisDirection::Right;
    default: return AxisDirection::None;
    }
}

AxisDirection vertical_direction(int target_fl, double reference_altitude_ft) {
    const double target = target_fl * kFeetPerFlightLevel;
    if (target > reference_altitude_ft + 1e-6) return AxisDirection::ClimbOnly;
    if (target < reference_altitude_ft - 1e-6) return AxisDirection::DescendOnly;
    return AxisDirection::None;
}

AxisDirection speed_direction(double target_kt, double reference_kt) {
    if (target_kt > reference_kt + 1e-6) return AxisDirection::FastOnly;
    if (target_kt < reference_kt - 1e-6) return AxisDirection::SlowOnly;
    return AxisDirection::None;
}

std::optional<std::string> constraint_violation(const std::vector<AxisFootprint>& footprint,
                                                const std::vector<AxisConstraint>& constraints) {
    for (const auto& f : footprint) {
        for (const auto& c : constraints) {
            if (c.callsign == f.callsign && c.axis == f.axis && opposes(c.direction, f.direction)) {
                return f.callsign + " " + to_string(f.axis) + " axis is constrained " + to_string(c.direction) +
                       " until " + describe(c.release) + "; " + to_string(f.direction) + " would reverse it";
            }
        }
    }
    return std::nullopt;
}

bool respects_constraints(const std::vector<AxisFootprint>& footprint, const std::vector<AxisConstraint>& constraints) {
    return !constraint_violation(footprint, constraints).has_value();
}

void add_constraint(std::vector<AxisConstraint>& constraints, const AxisConstraint& c) {
    if (c.direction == AxisDirection::None) return;
    for (auto& existing : constraints) {
        if (existing.callsign != c.callsign || existing.axis != c.axis) continue;
        if (opposes(existing.direction, c.direction)) {
            throw PlanError("constraint on " + c.callsign + " " + to_string(c.axis) + " would flip " +
                            to_string(existing.direction) + " to " + to_string(c.direction));
        }
        if (existing.release != c.release) {
            if (existing.release.kind == Condition::Kind::And) {
                if (std::find(existing.release.operands.begin(), existing.release.operands.end(), c.release) ==
                    existing.release.operands.end()) {
                    existing.release.operands.push_back(c.release);
                }
            } else {
                existing.release = Condition::all_of({existing.release, c.release});
            }
        }
        return;
    }
    constraints.push_back(c);
}

std::vector<AxisConstraint> release_constraints(const std::vector<AxisConstraint>& constraints,
                                                const AirspaceSnapshot& snap, const PairHistory& history,
                                                const LaneNetwork& lanes, double lateral_minimum_nm) {
    std::vector<AxisConstraint> out;
    const EvalContext ctx{snap, history, lanes, lateral_minimum_nm};
    for (const auto& c : constraints) {
        if (snap.has_departed(c.callsign)) continue;
        if (!snap.find(c.callsign)) {
            out.push_back(c);
            continue;
        }
        bool released = false;
        try {
            released = evaluate_condition(c.release, c.callsign, ctx);
        } catch (const EvaluationError&) {
            released = false;
        }
        if (!released) out.push_back(c);
    }
    return out;
}

}  // namespace skylane
