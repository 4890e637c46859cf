#include "skylane/resolver.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace skylane {

const char* to_string(StrategyId id) {
    switch (id) {
    case StrategyId::LateralOffset: return "lateral_offset";
    case StrategyId::LevelDescent: return "level_descent";
    case StrategyId::LevelClimb: return "level_climb";
    case StrategyId::ExchangeLevels: return "exchange_levels";
    case StrategyId::SpeedTrail: return "speed_trail";
    default: return "additional";
    }
}

StrategyId strategy_id_from_string(const std::string& s) {
    for (auto id : {StrategyId::LateralOffset, StrategyId::LevelDescent, StrategyId::LevelClimb,
                    StrategyId::ExchangeLevels, StrategyId::SpeedTrail, StrategyId::Additional}) {
        if (s == to_string(id)) return id;
    }
    throw std::invalid_argument("unknown strategy '" + s + "'");
}

int strategy_priority(StrategyId id) {
    switch (id) {
    case StrategyId::LateralOffset: return 1;
    case StrategyId::LevelDescent: return 2;
    case StrategyId::LevelClimb: return 3;
    case StrategyId::ExchangeLevels: return 4;
    case StrategyId::SpeedTrail: return 5;
    default: return 6;
    }
}

const char* strategy_title(StrategyId id) {
    switch (id) {
    case StrategyId::LateralOffset: return "Lateral separation";
    case StrategyId::LevelDescent: return "Level change (descent)";
    case StrategyId::LevelClimb: return "Level change (climb)";
    case StrategyId::ExchangeLevels: return "Exchange levels";
    case StrategyId::SpeedTrail: return "Match speed and trail";
    default: return "Additional strategies";
    }
}

namespace {

constexpr StrategyId Lat = StrategyId::LateralOffset;
constexpr StrategyId Desc = StrategyId::LevelDescent;
constexpr StrategyId Climb = StrategyId::LevelClimb;
constexpr StrategyId Exch = StrategyId::ExchangeLevels;
constexpr StrategyId Trail = StrategyId::SpeedTrail;
constexpr StrategyId More = StrategyId::Additional;

struct LibraryRow {
    const char* cls;
    std::vector<StrategyId> order;
};

// Overtakes and other same-direction encounters try a lane offset and speed
// control before any level change; head-on encounters never trail.
const std::vector<LibraryRow>& standard_rows() {
    static const std::vector<LibraryRow> rows = {
    {"LL/HO/Similar", {Lat, Desc, Climb, Exch, More}},
    {"LL/HO/AC1Faster", {Lat, Desc, Climb, Exch, More}},
    {"LL/HO/AC2Faster", {Lat, Desc, Climb, Exch, More}},
    {"LL/CR/Similar", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LL/CR/AC1Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LL/CR/AC2Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LL/P/Similar", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LL/P/AC1Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LL/P/AC2Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LA/HO/Similar", {Lat, Desc, Climb, Exch, More}},
    {"LA/HO/AC1Faster", {Lat, Desc, Climb, Exch, More}},
    {"LA/HO/AC2Faster", {Lat, Desc, Climb, Exch, More}},
    {"LA/CR/Similar", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LA/CR/AC1Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LA/CR/AC2Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LA/P/Similar", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LA/P/AC1Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LA/P/AC2Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LD/HO/Similar", {Lat, Desc, Climb, Exch, More}},
    {"LD/HO/AC1Faster", {Lat, Desc, Climb, Exch, More}},
    {"LD/HO/AC2Faster", {Lat, Desc, Climb, Exch, More}},
    {"LD/CR/Similar", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LD/CR/AC1Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LD/CR/AC2Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"LD/P/Similar", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LD/P/AC1Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    {"LD/P/AC2Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    {"AD/HO/Similar", {Lat, Desc, Climb, Exch, More}},
    {"AD/HO/AC1Faster", {Lat, Desc, Climb, Exch, More}},
    {"AD/HO/AC2Faster", {Lat, Desc, Climb, Exch, More}},
    {"AD/CR/Similar", {Lat, Desc, Climb, Exch, Trail, More}},
    {"AD/CR/AC1Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"AD/CR/AC2Faster", {Lat, Desc, Climb, Exch, Trail, More}},
    {"AD/P/Similar", {Lat, Trail, Desc, Climb, Exch, More}},
    {"AD/P/AC1Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    {"AD/P/AC2Faster", {Lat, Trail, Desc, Climb, Exch, More}},
    };
    return rows;
}

}  // namespace

StrategyLibrary StrategyLibrary::standard() {
    StrategyLibrary lib;
    for (const auto& row : standard_rows()) lib.set(ConflictClass::parse(row.cls), row.order);
    return lib;
}

const std::vector<StrategyId>& StrategyLibrary::strategies(const ConflictClass& c) const {
    return table_[static_cast<std::size_t>(c.index())];
}

void StrategyLibrary::set(const ConflictClass& c, std::vector<StrategyId> order) {
    table_[static_cast<std::size_t>(c.index())] = std::move(order);
}

std::vector<StrategyId> get_strategies(const ConflictClass& c, const StrategyLibrary& library) {
    return library.strategies(c);
}

const std::string& Attribution::id(const std::string& callsign, Axis axis) const {
    auto it = causal.find(callsign);
    if (it == causal.end() || !it->second.count(axis)) {
        throw IntegrityError("no causal action for " + callsign + " on the " + to_string(axis) + " axis");
    }
    return it->second.at(axis);
}

bool Attribution::has(const std::string& callsign, Axis axis) const {
    auto it = causal.find(callsign);
    return it != causal.end() && it->second.count(axis) != 0;
}

namespace {

const Rollout& find_rollout(const RolloutSet& rs, const RolloutSource& src) {
    for (const Rollout* r : rs.all())
        if (r->source == src) return *r;
    throw IntegrityError("rollout " + src.label() + " is not part of the ensemble");
}

const Trajectory* find_trajectory(const Rollout& r, const std::string& cs) {
    auto it = std::lower_bound(r.trajectories.begin(), r.trajectories.end(), cs,
                               [](const Trajectory& t, const std::string& c) { return t.callsign < c; });
    return (it != r.trajectories.end() && it->callsign == cs) ? &*it : nullptr;
}

// Firing history of one aircraft as seen by the rollout that produced `src`.
// Counterfactual rollouts start from the nominal run at the cut.
std::vector<FiringEvent> firing_history(const RolloutSet& rs, const RolloutSource& src, const std::string& cs) {
    std::vector<FiringEvent> out;
    if (src.kind == RolloutSource::Kind::Counterfactual) {
        if (const auto* tr = find_trajectory(rs.nominal, cs)) {
            for (const auto& e : tr->firings)
                if (e.time < src.cut_time - 1e-6) out.push_back(e);
        }
    }
    if (const auto* tr = find_trajectory(find_rollout(rs, src), cs)) {
        out.insert(out.end(), tr->firings.begin(), tr->firings.end());
    }
    return out;
}

bool active_at(const PlannedAction& pa, const std::vector<FiringEvent>& events, double t) {
    bool active = pa.status != ActionStatus::Pending;
    bool complete = pa.status == ActionStatus::Complete;
    for (const auto& e : events) {
        if (e.time > t + 1e-6 || e.action_id != pa.id) continue;
        if (e.kind == FiringKind::Activated) active = true;
        if (e.kind == FiringKind::Completed) complete = true;
    }
    return active && !complete;
}

const Sample& sample_at(const RolloutSet& rs, const RolloutSource& src, const std::string& cs, double t) {
    const auto* tr = find_trajectory(find_rollout(rs, src), cs);
    const Sample* s = tr ? tr->at(t) : nullptr;
    if (!s) throw IntegrityError("no sample for " + cs + " at t=" + std::to_string(t) + " in " + src.label());
    return *s;
}

}  // namespace

Attribution attribute_cause(const ConflictRecord& conflict, const AirspacePlan& plan, const RolloutSet& rollouts) {
    Attribution out;
    for (const auto& cs : {conflict.ac1, conflict.ac2}) {
        auto pit = plan.plans.find(cs);
        if (pit == plan.plans.end()) throw IntegrityError("no flight plan for " + cs);
        const auto events = firing_history(rollouts, conflict.source, cs);
        auto& axes = out.causal[cs];
        for (Axis axis : kAllAxes) {
            for (const auto& pa : pit->second.chain(axis)) {
                if (active_at(pa, events, conflict.t_first)) {
                    axes.emplace(axis, pa.id);
                    break;
                }
            }
        }
        for (Axis axis : {Axis::Lateral, Axis::Vertical}) {
            if (!axes.count(axis)) {
                throw IntegrityError(cs + " has no active " + std::string(to_string(axis)) + " action at t=" +
                                     std::to_string(conflict.t_first));
            }
        }
    }
    return out;
}

namespace {

int round_fl(double feet) { return static_cast<int>(std::lround(feet / 1000.0)) * 10; }

std::string fl_text(int fl) { return "FL" + std::to_string(fl); }

std::string fmt_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Action change_level(int from_fl, int to_fl) {
    if (to_fl > from_fl) return Action::climb_to(to_fl);
    if (to_fl < from_fl) return Action::descend_to(to_fl);
    return Action::maintain(to_fl);
}

// The causal vertical action re-issued once the manoeuvre no longer needs its level.
Action resume_vertical(const Action& original, int from_fl) {
    if (original.axis() != Axis::Vertical) return original;
    return change_level(from_fl, original.level_fl);
}

PlannedAction phase(Condition trigger, Action action, Condition completion) {
    PlannedAction pa;
    pa.trigger = std::move(trigger);
    pa.action = std::move(action);
    pa.completion = std::move(completion);
    return pa;
}

struct Pair {
    std::string cs;
    std::string other;
};

class CandidateBuilder {
public:
    CandidateBuilder(const CandidateContext& ctx, const StrategyParams& params) : ctx_(ctx), params_(params) {}

    std::vector<StrategyCandidate> build(StrategyId id) const {
        switch (id) {
        case StrategyId::LateralOffset: return lateral();
        case StrategyId::LevelDescent: return level_change(false);
        case StrategyId::LevelClimb: return level_change(true);
        case StrategyId::ExchangeLevels: return exchange();
        case StrategyId::SpeedTrail: return trail();
        default: return {};
        }
    }

private:
    const ConflictRecord& c() const { return ctx_.conflict; }
    const FlightPlan& plan_of(const std::string& cs) const { return ctx_.plan.plans.at(cs); }
    const PlannedAction& causal(const std::string& cs, Axis axis) const {
        const auto* pa = plan_of(cs).find(ctx_.attribution.id(cs, axis));
        if (!pa) throw IntegrityError("causal action of " + cs + " is not in its plan");
        return *pa;
    }
    const Sample& at_first(const std::string& cs) const {
        return sample_at(ctx_.rollouts, c().source, cs, c().t_first);
    }
    Condition passed(const std::string& other) const { return Condition::passed_laterally(other); }

    std::vector<std::pair<LaneSide, LaneSide>> side_pairs() const {
        if (c().cls.lateral == LateralClass::P) {
            return {{LaneSide::Left, LaneSide::Right}, {LaneSide::Right, LaneSide::Left}};
        }
        return {{LaneSide::Left, LaneSide::Left}, {LaneSide::Right, LaneSide::Right}};
    }

    Manoeuvre lateral_manoeuvre(const std::string& cs, const std::string& other, LaneSide side, bool resume,
                                StrategyId id) const {
        const FlightPlan& fp = plan_of(cs);
        const PlannedAction& cause = causal(cs, Axis::Lateral);
        Manoeuvre m;
        m.strategy_id = to_string(id);
        if (resume) {
            m.phases.push_back(phase(Condition::immediate(), Action::fly_lane(fp.route_id, side), passed(other)));
            m.phases.push_back(phase(passed(other), Action::resume_nav(fp.exit.fix_id), cause.completion));
        } else {
            m.phases.push_back(phase(Condition::immediate(), Action::fly_lane(fp.route_id, side), cause.completion));
        }
        return m;
    }

    void add_lateral(StrategyCandidate& cand, const std::string& cs, const std::string& other, LaneSide side) const {
        const auto dir = lateral_direction(side);
        cand.footprint.push_back({cs, Axis::Lateral, dir});
        cand.constraints.push_back({cs, Axis::Lateral, dir, passed(other)});
    }

    std::vector<StrategyCandidate> lateral() const {
        std::vector<StrategyCandidate> out;
        const bool resume = params_.lateral_resume;
        for (auto [s1, s2] : side_pairs()) {
            StrategyCandidate cand;
            cand.strategy = StrategyId::LateralOffset;
            cand.label = std::string(strategy_title(cand.strategy)) + ": " + c().ac1 + " " + to_string(s1) + ", " +
                         c().ac2 + " " + to_string(s2);
            cand.parameters = {{"side_" + c().ac1, to_string(s1)},
                               {"side_" + c().ac2, to_string(s2)},
                               {"resume", resume ? "true" : "false"}};
            cand.manoeuvres[c().ac1] = lateral_manoeuvre(c().ac1, c().ac2, s1, resume, cand.strategy);
            cand.manoeuvres[c().ac2] = lateral_manoeuvre(c().ac2, c().ac1, s2, resume, cand.strategy);
            add_lateral(cand, c().ac1, c().ac2, s1);
            add_lateral(cand, c().ac2, c().ac1, s2);
            out.push_back(std::move(cand));
        }
        return out;
    }

    // Distance needed to reach `target_fl`, return to cruise and still meet the exit level.
    bool exit_satisfiable(const std::string& cs, int target_fl) const {
        const FlightPlan& fp = plan_of(cs);
        if (fp.exit_abandoned) return true;
        const Sample& s = at_first(cs);
        const Route& route = ctx_.lanes.route(fp.route_id);
        const int idx = route.fix_index(fp.exit.fix_id);
        if (idx < 0) return false;
        const Lane& lane = ctx_.lanes.lane(fp.route_id, s.lane);
        const double to_go = lane.vertex_s()[static_cast<std::size_t>(idx)] - s.s;
        const auto& perf = ctx_.twin.perf;
        auto leg = [&](double from_ft, double to_ft) {
            const double rate = to_ft > from_ft ? perf.climb_rate_fpm : perf.descent_rate_fpm;
            return descent_distance_nm(std::abs(to_ft - from_ft), rate, s.ground_speed_kt);
        };
        const double target_ft = target_fl * kFeetPerFlightLevel;
        const double cruise_ft = fp.pfl * kFeetPerFlightLevel;
        const double need = leg(s.altitude_ft, target_ft) + leg(target_ft, cruise_ft) +
                            leg(cruise_ft, fp.exit.level_fl * kFeetPerFlightLevel);
        return to_go >= need - 1e-9;
    }

    std::vector<StrategyCandidate> level_change(bool climb) const {
        const Sample& s1 = at_first(c().ac1);
        const Sample& s2 = at_first(c().ac2);
        std::vector<int> targets;
        for (int k : params_.level_steps) {
            int fl;
            if (climb) {
                const double top = std::max(s1.altitude_ft, s2.altitude_ft) + 1000.0;
                fl = static_cast<int>(std::ceil(top / 1000.0 - 1e-9)) * 10 + (k - 1) * 10;
            } else {
                const double bottom = std::min(s1.altitude_ft, s2.altitude_ft) - 1000.0;
                fl = static_cast<int>(std::floor(bottom / 1000.0 + 1e-9)) * 10 - (k - 1) * 10;
            }
            const double ft = fl * kFeetPerFlightLevel;
            if (ft < ctx_.twin.floor_ft - 1e-9 || ft > ctx_.twin.ceiling_ft + 1e-9) continue;
            targets.push_back(fl);
        }
        std::vector<StrategyCandidate> out;
        if (targets.empty()) return out;

        const bool first_ok = exit_satisfiable(c().ac1, targets.front());
        const bool second_ok = exit_satisfiable(c().ac2, targets.front());
        std::vector<Pair> movers = {{c().ac1, c().ac2}, {c().ac2, c().ac1}};
        if (!first_ok && second_ok) std::swap(movers[0], movers[1]);

        const StrategyId id = climb ? StrategyId::LevelClimb : StrategyId::LevelDescent;
        for (const auto& [mover, other] : movers) {
            const Sample& ms = mover == c().ac1 ? s1 : s2;
            const PlannedAction& cause = causal(mover, Axis::Vertical);
            for (int fl : targets) {
                StrategyCandidate cand;
                cand.strategy = id;
                cand.label = std::string(strategy_title(id)) + ": " + mover + " to " + fl_text(fl);
                cand.parameters = {{"mover", mover}, {"level_fl", std::to_string(fl)}};
                Manoeuvre m;
                m.strategy_id = to_string(id);
                m.parameters = cand.parameters;
                m.phases.push_back(phase(Condition::immediate(), climb ? Action::climb_to(fl) : Action::descend_to(fl),
                                         Condition::reached_level(fl)));
                m.phases.push_back(phase(Condition::reached_level(fl), Action::maintain(fl), passed(other)));
                m.phases.push_back(phase(passed(other), resume_vertical(cause.action, fl), cause.completion));
                cand.manoeuvres[mover] = std::move(m);
                const auto dir = vertical_direction(fl, ms.altitude_ft);
                cand.footprint.push_back({mover, Axis::Vertical, dir});
                cand.constraints.push_back({mover, Axis::Vertical, dir, passed(other)});
                out.push_back(std::move(cand));
            }
        }
        return out;
    }

    std::vector<StrategyCandidate> exchange() const {
        std::vector<StrategyCandidate> out;
        const Sample& s1 = at_first(c().ac1);
        const Sample& s2 = at_first(c().ac2);
        const int l1 = round_fl(s1.altitude_ft), l2 = round_fl(s2.altitude_ft);
        if (l1 == l2) return out;
        const double threshold = ctx_.twin.lateral_minimum_nm;
        for (auto [side1, side2] : side_pairs()) {
            StrategyCandidate cand;
            cand.strategy = StrategyId::ExchangeLevels;
            cand.label = std::string(strategy_title(cand.strategy)) + ": " + c().ac1 + " " + to_string(side1) + " to " +
                         fl_text(l2) + ", " + c().ac2 + " " + to_string(side2) + " to " + fl_text(l1);
            cand.parameters = {{"side_" + c().ac1, to_string(side1)},
                               {"side_" + c().ac2, to_string(side2)},
                               {"level_" + c().ac1, std::to_string(l2)},
                               {"level_" + c().ac2, std::to_string(l1)}};
            const std::array<std::tuple<std::string, std::string, LaneSide, int, int, double>, 2> legs{
                std::tuple{c().ac1, c().ac2, side1, l1, l2, s1.altitude_ft},
                std::tuple{c().ac2, c().ac1, side2, l2, l1, s2.altitude_ft}};
            for (const auto& [cs, other, side, own_fl, to_fl, alt] : legs) {
                Manoeuvre m = lateral_manoeuvre(cs, other, side, true, cand.strategy);
                const PlannedAction& cause = causal(cs, Axis::Vertical);
                const Condition apart = Condition::lateral_separation_exceeds(other, threshold);
                m.phases.push_back(phase(apart, change_level(own_fl, to_fl), Condition::reached_level(to_fl)));
                m.phases.push_back(phase(Condition::reached_level(to_fl), Action::maintain(to_fl), passed(other)));
                m.phases.push_back(phase(passed(other), resume_vertical(cause.action, to_fl), cause.completion));
                m.parameters = cand.parameters;
                cand.manoeuvres[cs] = std::move(m);
                add_lateral(cand, cs, other, side);
                const auto vdir = vertical_direction(to_fl, alt);
                cand.footprint.push_back({cs, Axis::Vertical, vdir});
                cand.constraints.push_back({cs, Axis::Vertical, vdir, passed(other)});
            }
            out.push_back(std::move(cand));
        }
        return out;
    }

    double commanded_speed(const std::string& cs) const {
        if (const auto* st = ctx_.world.snapshot.find(cs)) return st->commanded_speed_kt;
        for (const auto& e : ctx_.world.entrants)
            if (e.callsign == cs) return e.speed_kt;
        return at_first(cs).ground_speed_kt;
    }

    std::vector<StrategyCandidate> trail() const {
        std::vector<StrategyCandidate> out;
        const Sample& s1 = at_first(c().ac1);
        const Sample& s2 = at_first(c().ac2);
        const Lane& lane1 = ctx_.lanes.lane(plan_of(c().ac1).route_id, s1.lane);
        const bool second_ahead = along_track(lane1, s2.position).s > s1.s;
        const std::string leader = second_ahead ? c().ac2 : c().ac1;
        const std::string trailer = second_ahead ? c().ac1 : c().ac2;

        const auto* ls = ctx_.world.snapshot.find(leader);
        const auto* ts = ctx_.world.snapshot.find(trailer);
        if (ls && ts && distance(ls->position, ts->position) < params_.trail_gap_nm) return out;

        const double lead_speed = commanded_speed(leader);
        const double own_speed = commanded_speed(trailer);
        for (double delta : {0.0, params_.trail_speed_delta_kt}) {
            const double speed = lead_speed - delta;
            if (speed < ctx_.twin.min_speed_kt) continue;
            StrategyCandidate cand;
            cand.strategy = StrategyId::SpeedTrail;
            cand.label = std::string(strategy_title(cand.strategy)) + ": " + trailer + " " + fmt_number(speed) +
                         "kt behind " + leader;
            cand.parameters = {{"leader", leader},
                               {"trailer", trailer},
                               {"speed_kt", fmt_number(speed)},
                               {"gap_nm", fmt_number(params_.trail_gap_nm)}};
            Manoeuvre lead;
            lead.strategy_id = to_string(cand.strategy);
            lead.parameters = cand.parameters;
            lead.phases.push_back(phase(Condition::immediate(), Action::set_speed(lead_speed), passed(trailer)));
            Manoeuvre tail = lead;
            tail.phases.clear();
            tail.phases.push_back(phase(Condition::immediate(), Action::set_speed(speed), passed(leader)));
            tail.phases.push_back(phase(passed(leader), Action::set_speed(own_speed), Condition::immediate()));
            cand.manoeuvres[leader] = std::move(lead);
            cand.manoeuvres[trailer] = std::move(tail);
            const auto dir = speed_direction(speed, own_speed);
            cand.footprint.push_back({trailer, Axis::Speed, dir});
            cand.constraints.push_back({trailer, Axis::Speed, dir, passed(leader)});
            out.push_back(std::move(cand));
        }
        return out;
    }

    const CandidateContext& ctx_;
    const StrategyParams& params_;
};

}  // namespace

std::vector<StrategyCandidate> expand_candidates(const CandidateContext& ctx, const StrategyLibrary& library,
                                                 const StrategyParams& params) {
    CandidateBuilder builder(ctx, params);
    std::vector<StrategyCandidate> out;
    for (StrategyId id : get_strategies(ctx.conflict.cls, library)) {
        auto part = builder.build(id);
        for (auto& cand : part) {
            cand.parameters["conflict"] = ctx.conflict.ac1 + "/" + ctx.conflict.ac2 + "@" + fmt_number(ctx.conflict.t_first);
            out.push_back(std::move(cand));
        }
    }
    return out;
}

AirspacePlan apply_strategy(const AirspacePlan& plan, const StrategyCandidate& candidate,
                            const ConflictRecord& conflict, const Attribution& attribution, int revision) {
    AirspacePlan out = plan;
    out.revision = revision;
    for (const auto& [cs, m] : candidate.manoeuvres) {
        auto pit = out.plans.find(cs);
        if (pit == out.plans.end()) throw PlanError("apply_strategy: no flight plan for " + cs);
        // Axes with a causal segment are spliced; the others (an idle speed
        // chain) receive the phases appended.
        Manoeuvre spliced = m, appended = m;
        spliced.phases.clear();
        appended.phases.clear();
        std::vector<std::string> ids;
        for (Axis axis : m.axes()) {
            if (attribution.has(cs, axis)) ids.push_back(attribution.id(cs, axis));
        }
        for (const auto& ph : m.phases) (attribution.has(cs, ph.axis()) ? spliced : appended).phases.push_back(ph);
        const std::string tag = conflict.ac1 + "/" + conflict.ac2 + "@" + fmt_number(conflict.t_first);
        spliced.parameters["conflict"] = tag;
        appended.parameters["conflict"] = tag;
        if (!spliced.phases.empty()) pit->second = splice(pit->second, ids, spliced);
        if (!appended.phases.empty()) pit->second = append_phases(pit->second, appended);
    }
    for (const auto& c : candidate.constraints) add_constraint(out.constraints, c);
    out.interventions.push_back(
        {revision, to_string(candidate.strategy), candidate.label, candidate.footprint, out.constraints});
    return out;
}

const char* to_string(NodeOutcome o) {
    switch (o) {
    case NodeOutcome::Accepted: return "accepted";
    case NodeOutcome::Rejected: return "rejected";
    case NodeOutcome::Backtracked: return "backtracked";
    case NodeOutcome::DepthLimit: return "depth_limit";
    case NodeOutcome::BudgetExhausted: return "budget_exhausted";
    default: return "attribution_failed";
    }
}

const char* to_string(Resolution::Outcome o) {
    switch (o) {
    case Resolution::Outcome::Solved: return "solved";
    case Resolution::Outcome::Fallback: return "fallback";
    default: return "escalated";
    }
}

int DecisionTrace::max_depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
}

std::vector<std::string> DecisionTrace::applied_strategies() const {
    std::vector<std::string> out;
    for (int id : accepted_path) {
        const auto& n = nodes[static_cast<std::size_t>(id)];
        if (n.parent >= 0) out.push_back(n.strategy);
    }
    return out;
}

std::vector<int> occupied_levels(const AirspacePlan& plan, const World& world) {
    std::set<int> levels;
    for (const auto& [cs, fp] : plan.plans) {
        for (const auto& pa : fp.chain(Axis::Vertical)) {
            if (pa.status != ActionStatus::Complete) levels.insert(pa.action.level_fl);
        }
    }
    for (const auto& st : world.snapshot.aircraft) {
        levels.insert(round_fl(st.altitude_ft));
        levels.insert(round_fl(st.target_altitude_ft));
    }
    for (const auto& e : world.entrants) levels.insert(round_fl(e.altitude_ft));
    return {levels.begin(), levels.end()};
}

FallbackResult fallback(const AirspacePlan& plan, const ConflictRecord& conflict, const World& world,
                        const TwinConfig& twin, int revision) {
    FallbackResult result;
    result.plan = plan;
    const auto occupied = occupied_levels(plan, world);
    std::vector<int> free;
    const int lowest = static_cast<int>(std::ceil(twin.floor_ft / 1000.0 - 1e-9)) * 10;
    const int highest = static_cast<int>(std::floor(twin.ceiling_ft / 1000.0 + 1e-9)) * 10;
    for (int fl = lowest; fl <= highest; fl += 10) {
        if (!std::binary_search(occupied.begin(), occupied.end(), fl)) free.push_back(fl);
    }
    result.alert.callsigns = {conflict.ac1, conflict.ac2};
    if (free.size() < 2) {
        result.alert.level = Alert::Level::Escalated;
        result.alert.message = "No unoccupied flight levels for " + conflict.ac1 + " and " + conflict.ac2 +
                               "; human intervention required";
        return result;
    }

    auto reference_fl = [&](const std::string& cs) {
        if (const auto* st = world.snapshot.find(cs)) return round_fl(st->altitude_ft);
        for (const auto& e : world.entrants)
            if (e.callsign == cs) return round_fl(e.altitude_ft);
        return plan.plans.at(cs).pfl;
    };

    AirspacePlan out = plan;
    out.revision = revision;
    std::vector<AxisFootprint> footprint;
    for (const auto& cs : {conflict.ac1, conflict.ac2}) {
        const int ref = reference_fl(cs);
        auto best = free.begin();
        for (auto it = free.begin(); it != free.end(); ++it) {
            const int d = std::abs(*it - ref), bd = std::abs(*best - ref);
            if (d < bd || (d == bd && *it > *best)) best = it;
        }
        const int level = *best;
        free.erase(best);
        result.assigned_levels[cs] = level;

        FlightPlan& fp = out.plans.at(cs);
        auto& chain = fp.chain(Axis::Vertical);
        std::erase_if(chain, [](const PlannedAction& pa) { return pa.status != ActionStatus::Complete; });
        const std::string mid = fp.allocate_id("F");
        fp.manoeuvres.push_back({mid, "fallback", {{"level_fl", std::to_string(level)}}});
        PlannedAction move;
        move.id = fp.allocate_id("S");
        move.trigger = Condition::immediate();
        move.action = change_level(ref, level);
        move.completion = Condition::reached_level(level);
        move.manoeuvre_id = mid;
        PlannedAction hold;
        hold.id = fp.allocate_id("S");
        hold.trigger = Condition::reached_level(level);
        hold.action = Action::maintain(level);
        hold.completion = Condition::never();
        hold.manoeuvre_id = mid;
        chain.push_back(std::move(move));
        chain.push_back(std::move(hold));
        fp.exit_abandoned = true;
        footprint.push_back({cs, Axis::Vertical, vertical_direction(level, ref * kFeetPerFlightLevel)});
    }
    out.interventions.push_back({revision, "fallback",
                                 "Safe flight level: " + conflict.ac1 + " " + fl_text(result.assigned_levels[conflict.ac1]) +
                                     ", " + conflict.ac2 + " " + fl_text(result.assigned_levels[conflict.ac2]),
                                 footprint, out.constraints});
    result.plan = std::move(out);
    result.applied = true;
    result.alert.level = Alert::Level::Fallback;
    result.alert.message = "Search failed for " + conflict.ac1 + "/" + conflict.ac2 + " at t=" +
                           fmt_number(conflict.t_first) + "s; safe flight levels issued, exit coordination abandoned";
    return result;
}

Resolver::Resolver(const LaneNetwork& lanes, ResolverConfig cfg, StrategyLibrary library)
    : lanes_(lanes), cfg_(std::move(cfg)), library_(std::move(library)) {
    if (cfg_.search.d_max < 1) throw std::invalid_argument("d_max must be >= 1");
    if (cfg_.search.branching_cap < 1) throw std::invalid_argument("branching cap must be >= 1");
}

TechnicalSafetyRecord Resolver::simulate_and_detect(const World& world, const AirspacePlan& plan,
                                                    RolloutSet* rollouts_out) const {
    World w = world;
    w.adopt(plan);
    RolloutSet rs = cfg_.parallel ? simulate_ensemble(w, lanes_, cfg_.twin, cfg_.ensemble)
                                  : simulate_ensemble_serial(w, lanes_, cfg_.twin, cfg_.ensemble);
    auto tsr = cfg_.parallel ? detect(rs, cfg_.minima, cfg_.thresholds) : detect_serial(rs, cfg_.minima, cfg_.thresholds);
    if (rollouts_out) *rollouts_out = std::move(rs);
    return tsr;
}

Resolver::Expansion Resolver::expand(const World& world, const AirspacePlan& plan) const {
    Expansion ex;
    RolloutSet rs;
    ex.tsr = simulate_and_detect(world, plan, &rs);
    if (ex.tsr.empty()) return ex;
    ex.conflict = earliest_conflict(ex.tsr);
    try {
        ex.attribution = attribute_cause(*ex.conflict, plan, rs);
    } catch (const IntegrityError&) {
        return ex;
    }
    for (const auto& [cs, axes] : ex.attribution->causal)
        for (const auto& [_, id] : axes) ex.conflict->causal[cs].push_back(id);
    World w = world;
    w.adopt(plan);
    const CandidateContext ctx{*ex.conflict, *ex.attribution, plan, w, rs, lanes_, cfg_.twin};
    for (auto& cand : expand_candidates(ctx, library_, cfg_.strategy)) {
        if (auto why = constraint_violation(cand.footprint, plan.constraints)) {
            ex.filtered.push_back({cand.label, *why});
        } else if (static_cast<int>(ex.candidates.size()) < cfg_.search.branching_cap) {
            ex.candidates.push_back(std::move(cand));
        } else {
            ex.filtered.push_back({cand.label, "beyond branching cap"});
        }
    }
    return ex;
}

namespace {

struct Search {
    const Resolver& resolver;
    const World& world;
    DecisionTrace trace;
    SearchStats stats;
    int next_revision;
    TechnicalSafetyRecord root_tsr;
    std::optional<AirspacePlan> solution;

    int add_node(int parent, int depth, int revision, const StrategyCandidate* via) {
        TraceNode n;
        n.id = static_cast<int>(trace.nodes.size());
        n.parent = parent;
        n.depth = depth;
        n.revision = revision;
        if (via) {
            n.strategy = via->label;
            n.strategy_id = via->strategy;
        }
        trace.nodes.push_back(std::move(n));
        if (parent >= 0) trace.nodes[static_cast<std::size_t>(parent)].children.push_back(trace.nodes.back().id);
        return trace.nodes.back().id;
    }

    TraceNode& node(int id) { return trace.nodes[static_cast<std::size_t>(id)]; }

    bool run(const AirspacePlan& plan, int depth, int node_id) {
        const auto& cfg = resolver.config();
        Resolver::Expansion ex = resolver.expand(world, plan);
        ++stats.simulations;
        if (node_id == 0) root_tsr = ex.tsr;
        node(node_id).tsr_size = static_cast<int>(ex.tsr.records.size());
        if (ex.tsr.empty()) {
            node(node_id).outcome = NodeOutcome::Accepted;
            solution = plan;
            return true;
        }
        node(node_id).conflict = ex.conflict;
        if (depth >= cfg.search.d_max) {
            node(node_id).outcome = depth == 0 ? NodeOutcome::DepthLimit : NodeOutcome::Rejected;
            return false;
        }
        if (!ex.attribution) {
            node(node_id).outcome = NodeOutcome::AttributionFailed;
            return false;
        }
        node(node_id).filtered = ex.filtered;
        stats.branching = std::max(stats.branching, static_cast<int>(ex.candidates.size()));
        for (const auto& cand : ex.candidates) {
            if (stats.expansions >= cfg.search.node_budget) {
                stats.budget_exhausted = true;
                node(node_id).outcome = NodeOutcome::BudgetExhausted;
                return false;
            }
            AirspacePlan child_plan;
            try {
                child_plan = apply_strategy(plan, cand, *ex.conflict, *ex.attribution, next_revision + 1);
            } catch (const PlanError& e) {
                node(node_id).filtered.push_back({cand.label, e.what()});
                continue;
            }
            node(node_id).tried.push_back(cand.label);
            const int revision = ++next_revision;
            ++stats.expansions;
            const int child = add_node(node_id, depth + 1, revision, &cand);
            if (run(child_plan, depth + 1, child)) {
                node(node_id).outcome = NodeOutcome::Accepted;
                return true;
            }
        }
        node(node_id).outcome = NodeOutcome::Backtracked;
        return false;
    }
};

long long expansion_bound(int branching, int d_max) {
    long long total = 0, power = 1;
    for (int i = 1; i <= d_max; ++i) {
        power *= branching;
        total += power;
    }
    return total;
}

}  // namespace

Resolution Resolver::resolve(const World& world) const {
    Search search{*this, world, {}, {}, world.plan.revision, {}, std::nullopt};
    search.add_node(-1, 0, world.plan.revision, nullptr);
    const bool solved = search.run(world.plan, 0, 0);

    Resolution res;
    res.trace = std::move(search.trace);
    res.stats = search.stats;
    res.stats.expansion_bound = static_cast<int>(std::min<long long>(
        expansion_bound(std::max(res.stats.branching, 1), cfg_.search.d_max), std::numeric_limits<int>::max()));
    res.root_tsr = search.root_tsr;

    if (solved) {
        // Greedy acceptance returns as soon as a leaf is safe, so that leaf is the newest node.
        for (int cur = static_cast<int>(res.trace.nodes.size()) - 1; cur >= 0;
             cur = res.trace.nodes[static_cast<std::size_t>(cur)].parent) {
            res.trace.accepted_path.insert(res.trace.accepted_path.begin(), cur);
        }
        res.outcome = Resolution::Outcome::Solved;
        res.plan = std::move(*search.solution);
        return res;
    }

    const ConflictRecord& worst = earliest_conflict(res.root_tsr);
    FallbackResult fb = fallback(world.plan, worst, world, cfg_.twin, search.next_revision + 1);
    res.alert = fb.alert;
    if (!fb.applied) {
        res.outcome = Resolution::Outcome::Escalated;
        res.plan = world.plan;
        res.final_tsr = res.root_tsr;
        return res;
    }
    res.outcome = Resolution::Outcome::Fallback;
    res.plan = std::move(fb.plan);
    res.final_tsr = simulate_and_detect(world, res.plan);
    return res;
}

}  // namespace skylane
