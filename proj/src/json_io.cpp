#include "skylane/json_io.hpp"

namespace skylane {

void to_json(Json& j, const Vec2& v) { j = Json::array({v.x, v.y}); }

void from_json(const Json& j, Vec2& v) {
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [x, y]");
    v = {j[0].get<double>(), j[1].get<double>()};
}

void to_json(Json& j, const Condition& c) {
    using K = Condition::Kind;
    j = Json{{"kind", to_string(c.kind)}};
    switch (c.kind) {
    case K::TimeReached: j["t"] = c.value; break;
    case K::AtFix: j["fix"] = c.ref; j["tolerance_nm"] = c.value; break;
    case K::LateralSeparationExceeds: j["other"] = c.ref; j["threshold_nm"] = c.value; break;
    case K::AircraftPassedLaterally: j["other"] = c.ref; break;
    case K::ReachedLevel: j["fl"] = c.level_fl; break;
    case K::Not:
    case K::And:
    case K::Or: j["operands"] = c.operands; break;
    default: break;
    }
}

void from_json(const Json& j, Condition& c) {
    using K = Condition::Kind;
    const auto kind = j.at("kind").get<std::string>();
    c = Condition{};
    for (K k : {K::Immediate, K::TimeReached, K::AtFix, K::LateralSeparationExceeds, K::AircraftPassedLaterally,
                K::ReachedLevel, K::Not, K::And, K::Or}) {
        if (kind == to_string(k)) c.kind = k;
    }
    if (kind != to_string(c.kind)) throw std::invalid_argument("unknown condition kind '" + kind + "'");
    switch (c.kind) {
    case K::TimeReached: c.value = j.at("t").get<double>(); break;
    case K::AtFix:
        c.ref = j.at("fix").get<std::string>();
        c.value = j.value("tolerance_nm", 0.0);
        break;
    case K::LateralSeparationExceeds:
        c.ref = j.at("other").get<std::string>();
        c.value = j.at("threshold_nm").get<double>();
        break;
    case K::AircraftPassedLaterally: c.ref = j.at("other").get<std::string>(); break;
    case K::ReachedLevel: c.level_fl = j.at("fl").get<int>(); break;
    case K::Not:
    case K::And:
    case K::Or: c.operands = j.at("operands").get<std::vector<Condition>>(); break;
    default: break;
    }
}

void to_json(Json& j, const Action& a) {
    using K = Action::Kind;
    j = Json{{"kind", to_string(a.kind)}, {"axis", to_string(a.axis())}, {"text", describe(a)}};
    switch (a.kind) {
    case K::ClimbTo:
    case K::DescendTo:
    case K::MaintainLevel: j["fl"] = a.level_fl; break;
    case K::SetSpeed: j["speed_kt"] = a.speed_kt; break;
    case K::FlyLane: j["route"] = a.route_id; j["lane"] = to_string(a.side); break;
    case K::ResumeNav: j["fix"] = a.fix_id; break;
    }
}

void from_json(const Json& j, Action& a) {
    using K = Action::Kind;
    a = Action{};
    a.kind = action_kind_from_string(j.at("kind").get<std::string>());
    switch (a.kind) {
    case K::ClimbTo:
    case K::DescendTo:
    case K::MaintainLevel: a.level_fl = j.at("fl").get<int>(); break;
    case K::SetSpeed: a.speed_kt = j.at("speed_kt").get<double>(); break;
    case K::FlyLane:
        a.route_id = j.at("route").get<std::string>();
        a.side = lane_side_from_string(j.at("lane").get<std::string>());
        break;
    case K::ResumeNav: a.fix_id = j.at("fix").get<std::string>(); break;
    }
}

void to_json(Json& j, const PlannedAction& pa) {
    j = Json{{"id", pa.id},
             {"trigger", pa.trigger},
             {"trigger_text", describe(pa.trigger)},
             {"action", pa.action},
             {"completion", pa.completion},
             {"completion_text", describe(pa.completion)},
             {"status", to_string(pa.status)},
             {"manoeuvre", pa.manoeuvre_id}};
}

void from_json(const Json& j, PlannedAction& pa) {
    pa.id = j.at("id").get<std::string>();
    pa.trigger = j.at("trigger").get<Condition>();
    pa.action = j.at("action").get<Action>();
    pa.completion = j.at("completion").get<Condition>();
    pa.status = action_status_from_string(j.value("status", std::string("Pending")));
    pa.manoeuvre_id = j.value("manoeuvre", std::string());
}

void to_json(Json& j, const FlightPlan& fp) {
    Json chains = Json::object();
    for (Axis axis : kAllAxes) chains[to_string(axis)] = fp.chain(axis);
    Json manoeuvres = Json::array();
    for (const auto& m : fp.manoeuvres) {
        manoeuvres.push_back({{"id", m.id}, {"strategy", m.strategy_id}, {"parameters", m.parameters}});
    }
    j = Json{{"callsign", fp.callsign},
             {"route", fp.route_id},
             {"pfl", fp.pfl},
             {"exit", {{"fix", fp.exit.fix_id}, {"fl", fp.exit.level_fl}}},
             {"exit_abandoned", fp.exit_abandoned},
             {"chains", chains},
             {"manoeuvres", manoeuvres},
             {"next_serial", fp.next_serial}};
}

void from_json(const Json& j, FlightPlan& fp) {
    fp = FlightPlan{};
    fp.callsign = j.at("callsign").get<std::string>();
    fp.route_id = j.at("route").get<std::string>();
    fp.pfl = j.at("pfl").get<int>();
    fp.exit = {j.at("exit").at("fix").get<std::string>(), j.at("exit").at("fl").get<int>()};
    fp.exit_abandoned = j.value("exit_abandoned", false);
    for (Axis axis : kAllAxes) {
        if (j.at("chains").contains(to_string(axis))) {
            fp.chain(axis) = j.at("chains").at(to_string(axis)).get<std::vector<PlannedAction>>();
        }
    }
    for (const auto& m : j.value("manoeuvres", Json::array())) {
        fp.manoeuvres.push_back({m.at("id").get<std::string>(), m.at("strategy").get<std::string>(),
                                 m.value("parameters", std::map<std::string, std::string>{})});
    }
    fp.next_serial = j.value("next_serial", 1);
}

void to_json(Json& j, const AxisConstraint& c) {
    j = Json{{"callsign", c.callsign},
             {"axis", to_string(c.axis)},
             {"direction", to_string(c.direction)},
             {"release", c.release},
             {"release_text", describe(c.release)}};
}

void from_json(const Json& j, AxisConstraint& c) {
    c.callsign = j.at("callsign").get<std::string>();
    c.axis = axis_from_string(j.at("axis").get<std::string>());
    c.direction = axis_direction_from_string(j.at("direction").get<std::string>());
    c.release = j.at("release").get<Condition>();
}

void to_json(Json& j, const AxisFootprint& f) {
    j = Json{{"callsign", f.callsign}, {"axis", to_string(f.axis)}, {"direction", to_string(f.direction)}};
}

void to_json(Json& j, const InterventionRecord& r) {
    j = Json{{"revision", r.revision},
             {"strategy", r.strategy_id},
             {"label", r.label},
             {"footprint", r.footprint},
             {"constraints_in_force", r.constraints_in_force}};
}

void to_json(Json& j, const AirspacePlan& p) {
    Json plans = Json::object();
    for (const auto& [cs, fp] : p.plans) plans[cs] = fp;
    j = Json{{"revision", p.revision}, {"plans", plans}, {"constraints", p.constraints}, {"interventions", p.interventions}};
}

void to_json(Json& j, const AircraftState& s) {
    j = Json{{"callsign", s.callsign},
             {"x", s.position.x},
             {"y", s.position.y},
             {"alt_ft", s.altitude_ft},
             {"gs_kt", s.ground_speed_kt},
             {"vr_fpm", s.vertical_rate_fpm},
             {"track_deg", s.track_deg},
             {"route", s.route_id},
             {"lane", to_string(s.lane)},
             {"s_nm", s.s},
             {"target_alt_ft", s.target_altitude_ft},
             {"commanded_speed_kt", s.commanded_speed_kt}};
}

void to_json(Json& j, const RolloutSource& s) {
    j = Json{{"kind", s.kind == RolloutSource::Kind::Nominal     ? "nominal"
                      : s.kind == RolloutSource::Kind::Perturbed ? "perturbed"
                                                                 : "counterfactual"},
             {"label", s.label()}};
    if (s.kind == RolloutSource::Kind::Perturbed) j["index"] = s.index;
    if (s.kind == RolloutSource::Kind::Counterfactual) j["cut_time"] = s.cut_time;
}

void to_json(Json& j, const ConflictRecord& r) {
    j = Json{{"ac1", r.ac1},
             {"ac2", r.ac2},
             {"t_first", r.t_first},
             {"t_last", r.t_last},
             {"cpa", {{"t", r.cpa.t}, {"distance_nm", r.cpa.distance_nm}, {"vertical_ft", r.cpa.vertical_ft}}},
             {"class",
              {{"vertical", to_string(r.cls.vertical)},
               {"lateral", to_string(r.cls.lateral)},
               {"speed", to_string(r.cls.speed)},
               {"label", r.cls.label()}}},
             {"source", r.source}};
    if (!r.causal.empty()) j["causal"] = r.causal;
}

void to_json(Json& j, const TechnicalSafetyRecord& t) {
    j = Json{{"revision", t.revision}, {"records", t.records}};
}

void to_json(Json& j, const TraceNode& n) {
    Json filtered = Json::array();
    for (const auto& f : n.filtered) filtered.push_back({{"label", f.label}, {"reason", f.reason}});
    j = Json{{"id", n.id},
             {"parent", n.parent},
             {"depth", n.depth},
             {"revision", n.revision},
             {"strategy", n.strategy},
             {"tsr_size", n.tsr_size},
             {"tried", n.tried},
             {"filtered", filtered},
             {"children", n.children},
             {"outcome", to_string(n.outcome)}};
    if (n.parent >= 0) {
        j["strategy_id"] = to_string(n.strategy_id);
        j["priority"] = strategy_priority(n.strategy_id);
    }
    if (n.conflict) j["conflict"] = *n.conflict;
}

void to_json(Json& j, const DecisionTrace& t) {
    j = Json{{"nodes", t.nodes}, {"accepted_path", t.accepted_path}, {"depth", t.depth()}};
}

void to_json(Json& j, const SearchStats& s) {
    j = Json{{"expansions", s.expansions},
             {"simulations", s.simulations},
             {"expansion_bound", s.expansion_bound},
             {"branching", s.branching},
             {"budget_exhausted", s.budget_exhausted}};
}

void to_json(Json& j, const Alert& a) {
    j = Json{{"level", a.level == Alert::Level::Fallback ? "fallback" : "escalated"},
             {"message", a.message},
             {"callsigns", a.callsigns}};
}

}  // namespace skylane
