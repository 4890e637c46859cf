#include "doctest.h"

#include <algorithm>
#include <random>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "skylane/plans.hpp"
#include "skylane/twin.hpp"

using namespace skylane;

namespace {

const Route kEast = fixture::straight_route("EAST", {0, 0}, {200, 0});

std::vector<const PlannedAction*> with_kind(const FlightPlan& fp, Axis axis, Action::Kind kind) {
    std::vector<const PlannedAction*> out;
    for (const auto& pa : fp.chain(axis))
        if (pa.action.kind == kind) out.push_back(&pa);
    return out;
}

PlannedAction phase(std::string id, Condition trig, Action act, Condition comp) {
    PlannedAction pa;
    pa.id = std::move(id);
    pa.trigger = std::move(trig);
    pa.action = std::move(act);
    pa.completion = std::move(comp);
    return pa;
}

// Altitude at the first sample at or past the exit fix.
double altitude_at_exit(const Trajectory& tr, double exit_s) {
    for (const auto& s : tr.samples)
        if (s.s >= exit_s - 1e-9) return s.altitude_ft;
    return tr.samples.back().altitude_ft;
}

}  // namespace

TEST_CASE("level transit has no climb or descent") {
    const auto fp = build_nominal_plan({"A", "EAST", 30000, 480}, kEast, 300, {"EAST_B", 300}, {});
    CHECK(with_kind(fp, Axis::Vertical, Action::Kind::ClimbTo).empty());
    CHECK(with_kind(fp, Axis::Vertical, Action::Kind::DescendTo).empty());
    REQUIRE(fp.chain(Axis::Vertical).size() == 1);
    CHECK(fp.chain(Axis::Vertical)[0].action == Action::maintain(300));
    CHECK(fp.chain(Axis::Speed).empty());
    REQUIRE(fp.chain(Axis::Lateral).size() == 1);
    CHECK(fp.chain(Axis::Lateral)[0].action == Action::resume_nav("EAST_B"));
}

TEST_CASE("top of descent sits at the descent distance before the exit fix") {
    const auto fp = build_nominal_plan({"A", "EAST", 35000, 480}, kEast, 350, {"EAST_B", 250}, {});
    const auto descents = with_kind(fp, Axis::Vertical, Action::Kind::DescendTo);
    REQUIRE(descents.size() == 1);
    const Condition& trig = descents[0]->trigger;
    CHECK(trig.kind == Condition::Kind::AtFix);
    CHECK(trig.ref == "EAST_B");
    const double expected = oracle::top_of_descent_nm(10000, 2000, 480);
    CHECK(expected == doctest::Approx(40.0));
    CHECK(trig.value == doctest::Approx(expected));
    CHECK(descents[0]->completion == Condition::reached_level(250));
}

TEST_CASE("entry below the preferred level starts with an immediate climb") {
    const auto fp = build_nominal_plan({"A", "EAST", 28000, 450}, kEast, 350, {"EAST_B", 350}, {});
    const auto& first = fp.chain(Axis::Vertical).front();
    CHECK(first.action == Action::climb_to(350));
    CHECK(first.trigger.kind == Condition::Kind::Immediate);
    CHECK(fp.chain(Axis::Vertical)[1].trigger == Condition::reached_level(350));
}

TEST_CASE("infeasible nominal plans are rejected") {
    CHECK_THROWS_AS(build_nominal_plan({"A", "EAST", 30000, 480}, kEast, 300, {"EAST_B", 350}, {}), PlanError);
    const Route short_route = fixture::straight_route("SHORT", {0, 0}, {20, 0});
    CHECK_THROWS_AS(build_nominal_plan({"A", "SHORT", 35000, 480}, short_route, 350, {"SHORT_B", 200}, {}), PlanError);
    CHECK_THROWS_AS(build_nominal_plan({"A", "EAST", 30000, 480}, kEast, 300, {"NOWHERE", 300}, {}), PlanError);
}

TEST_CASE("the nominal descent is as late as possible") {
    const LaneNetwork lanes({kEast}, 3.5);
    TwinConfig cfg;
    cfg.dt_s = 1.0;
    auto run = [&](double trigger_shift_nm) {
        World w;
        auto fp = build_nominal_plan({"A", "EAST", 35000, 480}, kEast, 350, {"EAST_B", 250}, cfg.perf);
        for (auto& pa : fp.chain(Axis::Vertical)) {
            if (pa.trigger.kind == Condition::Kind::AtFix) pa.trigger.value -= trigger_shift_nm;
            if (pa.completion.kind == Condition::Kind::AtFix && pa.action.kind == Action::Kind::MaintainLevel &&
                pa.action.level_fl == 350)
                pa.completion.value -= trigger_shift_nm;
        }
        w.plan.plans["A"] = fp;
        w.schedule({"A", "EAST", 0, 35000, 480});
        const auto res = simulate(w, lanes, cfg, 1600.0);
        return altitude_at_exit(res.trajectories.at(0), 200.0);
    };
    CHECK(run(0.0) == doctest::Approx(25000.0).epsilon(0.004));
    CHECK(run(1.0) > 25000.0 + 100.0);
}

TEST_CASE("condition evaluation on a snapshot") {
    const LaneNetwork lanes({kEast, fixture::straight_route("WEST", {200, 0}, {0, 0})}, 3.5);
    AirspaceSnapshot snap;
    AircraftState a;
    a.callsign = "A";
    a.position = {10, 0};
    a.route_id = "EAST";
    a.s = 10;
    a.altitude_ft = 30000;
    AircraftState b = a;
    b.callsign = "B";
    b.position = {10, 7};
    snap.insert(a);
    snap.insert(b);
    PairHistory hist;
    const EvalContext ctx{snap, hist, lanes};
    CHECK(evaluate_condition(Condition::immediate(), "A", ctx));
    CHECK(evaluate_condition(Condition::lateral_separation_exceeds("B", 5.0), "A", ctx));
    CHECK_FALSE(evaluate_condition(Condition::lateral_separation_exceeds("B", 8.0), "A", ctx));
    CHECK(evaluate_condition(Condition::reached_level(300), "A", ctx));
    CHECK_FALSE(evaluate_condition(Condition::reached_level(310), "A", ctx));
    CHECK(evaluate_condition(Condition::at_fix("EAST_B", 190.0), "A", ctx));
    CHECK_FALSE(evaluate_condition(Condition::at_fix("EAST_B", 189.0), "A", ctx));
    CHECK_FALSE(evaluate_condition(Condition::never(), "A", ctx));
    CHECK(evaluate_condition(Condition::any_of({Condition::never(), Condition::immediate()}), "A", ctx));
    CHECK_FALSE(evaluate_condition(Condition::all_of({Condition::never(), Condition::immediate()}), "A", ctx));
    CHECK_THROWS_AS(evaluate_condition(Condition::lateral_separation_exceeds("NOBODY", 5.0), "A", ctx),
                    EvaluationError);
    CHECK_THROWS_AS(evaluate_condition(Condition::reached_level(300), "NOBODY", ctx), EvaluationError);
}

TEST_CASE("head-on pair has passed laterally once it is clear of the minimum") {
    const Route west = fixture::straight_route("WEST", {100, 0}, {0, 0});
    const Route east = fixture::straight_route("EAST", {0, 0}, {100, 0});
    const LaneNetwork lanes({east, west}, 3.5);
    TwinConfig cfg;
    World w = fixture::make_world(lanes, {{"A", "EAST"}, {"B", "WEST"}});
    // Closing at 900 kt from 100 NM: abeam at t = 400 s.
    const auto before = simulate(w, lanes, cfg, 390.0).final_world;
    const auto after = simulate(w, lanes, cfg, 430.0).final_world;
    const EvalContext before_ctx{before.snapshot, before.history, lanes};
    const EvalContext after_ctx{after.snapshot, after.history, lanes};
    CHECK_FALSE(evaluate_condition(Condition::passed_laterally("B"), "A", before_ctx));
    CHECK(evaluate_condition(Condition::passed_laterally("B"), "A", after_ctx));
    CHECK(evaluate_condition(Condition::passed_laterally("A"), "B", after_ctx));

    // Oracle: sign of the along-track delta really flipped.
    const auto* sa = after.snapshot.find("A");
    const auto* sb = after.snapshot.find("B");
    REQUIRE(sa);
    REQUIRE(sb);
    CHECK(sa->position.x > sb->position.x);
    CHECK(sa->position.x - sb->position.x >= 5.0);
}

TEST_CASE("splice replaces the causal segment only") {
    const auto fp = build_nominal_plan({"A", "EAST", 35000, 480}, kEast, 350, {"EAST_B", 250}, {});
    const std::string resume = fp.chain(Axis::Lateral)[0].id;
    Manoeuvre m;
    m.strategy_id = "lateral_offset";
    m.phases = {phase("", Condition::immediate(), Action::fly_lane("EAST", LaneSide::Left),
                      Condition::passed_laterally("B")),
                phase("", Condition::passed_laterally("B"), Action::resume_nav("EAST_B"), Condition::at_fix("EAST_B", 0))};
    const auto out = splice(fp, {resume}, m);
    REQUIRE(out.chain(Axis::Lateral).size() == 2);
    CHECK(out.chain(Axis::Lateral)[0].action == Action::fly_lane("EAST", LaneSide::Left));
    CHECK(out.chain(Axis::Lateral)[1].trigger == out.chain(Axis::Lateral)[0].completion);
    CHECK(out.chain(Axis::Vertical) == fp.chain(Axis::Vertical));
    CHECK(out.find(resume) == nullptr);
    CHECK(out.manoeuvres.size() == fp.manoeuvres.size() + 1);
    // Input untouched.
    CHECK(fp.chain(Axis::Lateral)[0].id == resume);
}

TEST_CASE("splice errors") {
    const auto fp = build_nominal_plan({"A", "EAST", 35000, 480}, kEast, 350, {"EAST_B", 250}, {});
    const std::string resume = fp.chain(Axis::Lateral)[0].id;
    Manoeuvre empty;
    empty.strategy_id = "x";
    CHECK_THROWS_AS(splice(fp, {resume}, empty), PlanError);

    Manoeuvre vertical;
    vertical.strategy_id = "x";
    vertical.phases = {phase("", Condition::immediate(), Action::climb_to(360), Condition::reached_level(360))};
    CHECK_THROWS_AS(splice(fp, {"missing"}, vertical), PlanError);
    CHECK_THROWS_AS(splice(fp, {resume}, vertical), PlanError);
}

TEST_CASE("splices on disjoint axes commute") {
    const auto fp = build_nominal_plan({"A", "EAST", 35000, 480}, kEast, 350, {"EAST_B", 350}, {});
    const std::string lat = fp.chain(Axis::Lateral)[0].id;
    const std::string vert = fp.chain(Axis::Vertical)[0].id;
    Manoeuvre ml;
    ml.id = "ML";
    ml.strategy_id = "lateral_offset";
    ml.phases = {phase("L1", Condition::immediate(), Action::fly_lane("EAST", LaneSide::Right),
                       Condition::passed_laterally("B")),
                 phase("L2", Condition::passed_laterally("B"), Action::resume_nav("EAST_B"), Condition::at_fix("EAST_B", 0))};
    Manoeuvre mv;
    mv.id = "MV";
    mv.strategy_id = "level_climb";
    mv.phases = {phase("V1", Condition::immediate(), Action::climb_to(360), Condition::reached_level(360)),
                 phase("V2", Condition::reached_level(360), Action::maintain(360), Condition::at_fix("EAST_B", 0))};
    const auto lv = splice(splice(fp, {lat}, ml), {vert}, mv);
    const auto vl = splice(splice(fp, {vert}, mv), {lat}, ml);
    CHECK(lv.chains == vl.chains);
    auto ids = [](const FlightPlan& p) {
        std::vector<std::string> v;
        for (const auto& m : p.manoeuvres) v.push_back(m.id);
        std::sort(v.begin(), v.end());
        return v;
    };
    CHECK(ids(lv) == ids(vl));
}

TEST_CASE("splice locality and chain integrity over random plans") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> level(28, 40);
    std::uniform_int_distribution<int> lane(0, 2);
    std::uniform_int_distribution<int> phases(1, 3);
    for (int k = 0; k < 200; ++k) {
        const int pfl = level(rng) * 10;
        const int exit = std::min(pfl, level(rng) * 10);
        const auto fp = build_nominal_plan({"A", "EAST", level(rng) * 1000.0, 450}, kEast, pfl, {"EAST_B", exit}, {});
        const bool lateral = k % 2 == 0;
        const auto& causal_chain = fp.chain(lateral ? Axis::Lateral : Axis::Vertical);
        std::uniform_int_distribution<std::size_t> pick(0, causal_chain.size() - 1);
        const std::string causal = causal_chain[pick(rng)].id;

        Manoeuvre m;
        m.strategy_id = "fuzz";
        const int n = phases(rng);
        Condition prev = Condition::immediate();
        for (int i = 0; i < n; ++i) {
            const Condition done = Condition::time_reached(100.0 * (i + 1) + k);
            const Action act = lateral ? Action::fly_lane("EAST", static_cast<LaneSide>(lane(rng)))
                                       : Action::maintain(300 + 10 * i);
            m.phases.push_back(phase("", prev, act, done));
            prev = done;
        }
        const auto out = splice(fp, {causal}, m);

        for (Axis axis : {Axis::Lateral, Axis::Vertical, Axis::Speed}) {
            for (const auto& pa : fp.chain(axis)) {
                if (pa.id == causal) continue;
                const auto* kept = out.find(pa.id);
                REQUIRE(kept);
                // Only the action right after the replaced segment is re-triggered.
                PlannedAction expect = pa;
                expect.trigger = kept->trigger;
                CHECK(*kept == expect);
            }
        }
        const auto& chain = out.chain(lateral ? Axis::Lateral : Axis::Vertical);
        std::vector<const PlannedAction*> spliced;
        for (const auto& pa : chain)
            if (pa.manoeuvre_id == out.manoeuvres.back().id) spliced.push_back(&pa);
        REQUIRE(spliced.size() == static_cast<std::size_t>(n));
        for (std::size_t i = 1; i < spliced.size(); ++i) CHECK(spliced[i]->trigger == spliced[i - 1]->completion);
        const auto after = std::find_if(chain.begin(), chain.end(), [&](const PlannedAction& pa) {
            return &pa == spliced.back();
        });
        if (after + 1 != chain.end()) CHECK((after + 1)->trigger == spliced.back()->completion);
    }
}

TEST_CASE("append_phases fills an idle speed chain") {
    const auto fp = build_nominal_plan({"A", "EAST", 35000, 480}, kEast, 350, {"EAST_B", 350}, {});
    Manoeuvre m;
    m.strategy_id = "speed_trail";
    m.phases = {phase("", Condition::immediate(), Action::set_speed(440), Condition::lateral_separation_exceeds("B", 10)),
                phase("", Condition::lateral_separation_exceeds("B", 10), Action::set_speed(480), Condition::never())};
    const auto out = append_phases(fp, m);
    CHECK(out.chain(Axis::Speed).size() == 2);
    CHECK(out.chain(Axis::Lateral) == fp.chain(Axis::Lateral));
    Manoeuvre lat;
    lat.strategy_id = "x";
    lat.phases = {phase("", Condition::immediate(), Action::fly_lane("EAST", LaneSide::Left), Condition::never())};
    CHECK_THROWS_AS(append_phases(fp, lat), PlanError);
}

TEST_CASE("active actions") {
    auto fp = build_nominal_plan({"A", "EAST", 35000, 480}, kEast, 350, {"EAST_B", 250}, {});
    CHECK(active_actions(fp).empty());
    fp.chain(Axis::Lateral)[0].status = ActionStatus::Active;
    fp.chain(Axis::Vertical)[0].status = ActionStatus::Active;
    auto act = active_actions(fp);
    CHECK(act.size() == 2);
    CHECK(act.at(Axis::Vertical).action == Action::maintain(350));
    fp.chain(Axis::Vertical)[1].status = ActionStatus::Active;
    CHECK_THROWS_AS(active_actions(fp), IntegrityError);
    for (auto& ch : fp.chains)
        for (auto& pa : ch) pa.status = ActionStatus::Complete;
    CHECK(active_actions(fp).empty());
}

TEST_CASE("descent becomes the active vertical action once its trigger fires") {
    const LaneNetwork lanes({kEast}, 3.5);
    TwinConfig cfg;
    World w = fixture::make_world(lanes, {{"A", "EAST", 0, 350, 350, 250, 480}});
    // Top of descent at 160 NM, reached at 1200 s.
    const auto res = simulate(w, lanes, cfg, 1215.0);
    const auto act = active_actions(res.final_world.plan.plans.at("A"));
    REQUIRE(act.count(Axis::Vertical));
    CHECK(act.at(Axis::Vertical).action == Action::descend_to(250));
}

TEST_CASE("axis constraint filtering") {
    struct Cand {
        std::string label;
        std::vector<AxisFootprint> footprint;
    };
    const std::vector<Cand> cands{{"both right", {{"A", Axis::Lateral, AxisDirection::Right}}},
                                  {"both left", {{"A", Axis::Lateral, AxisDirection::Left}}},
                                  {"descend further", {{"A", Axis::Vertical, AxisDirection::DescendOnly}}},
                                  {"climb", {{"A", Axis::Vertical, AxisDirection::ClimbOnly}}}};
    CHECK(filter_by_axis_constraints(cands, {}).size() == cands.size());
    const std::vector<AxisConstraint> cons{{"A", Axis::Lateral, AxisDirection::Left, Condition::passed_laterally("B")},
                                           {"A", Axis::Vertical, AxisDirection::DescendOnly, Condition::never()}};
    const auto kept = filter_by_axis_constraints(cands, cons);
    std::vector<std::string> labels;
    for (const auto& c : kept) labels.push_back(c.label);
    CHECK(labels == std::vector<std::string>{"both left", "descend further"});
    CHECK(constraint_violation(cands[0].footprint, cons).has_value());
}

TEST_CASE("constraints reinforce, never flip") {
    std::vector<AxisConstraint> cons;
    add_constraint(cons, {"A", Axis::Lateral, AxisDirection::Left, Condition::passed_laterally("B")});
    add_constraint(cons, {"A", Axis::Lateral, AxisDirection::Left, Condition::passed_laterally("C")});
    REQUIRE(cons.size() == 1);
    CHECK(cons[0].direction == AxisDirection::Left);
    CHECK(cons[0].release.kind == Condition::Kind::And);
    CHECK_THROWS_AS(add_constraint(cons, {"A", Axis::Lateral, AxisDirection::Right, Condition::never()}), PlanError);
    CHECK(opposes(AxisDirection::ClimbOnly, AxisDirection::DescendOnly));
    CHECK_FALSE(opposes(AxisDirection::Left, AxisDirection::Left));
}

TEST_CASE("constraint release") {
    const Route west = fixture::straight_route("WEST", {100, 0}, {0, 0});
    const Route east = fixture::straight_route("EAST", {0, 0}, {100, 0});
    const LaneNetwork lanes({east, west}, 3.5);
    World w = fixture::make_world(lanes, {{"A", "EAST"}, {"B", "WEST"}});
    const auto after = simulate(w, lanes, TwinConfig{}, 430.0).final_world;
    const auto before = simulate(w, lanes, TwinConfig{}, 100.0).final_world;
    const std::vector<AxisConstraint> cons{
        {"A", Axis::Lateral, AxisDirection::Left, Condition::passed_laterally("B")},
        {"B", Axis::Lateral, AxisDirection::Left, Condition::passed_laterally("A")}};
    CHECK(release_constraints(cons, after.snapshot, after.history, lanes).empty());
    CHECK(release_constraints(cons, before.snapshot, before.history, lanes) == cons);
    CHECK(release_constraints({}, after.snapshot, after.history, lanes).empty());
}
