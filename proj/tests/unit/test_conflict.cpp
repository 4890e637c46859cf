#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "skylane/conflict.hpp"

using namespace skylane;

namespace {

constexpr double kNmPerSecAt(double kt) { return kt / 3600.0; }

// Straight-line trajectory sampled every `dt` over [0, duration].
Trajectory straight(const std::string& cs, Vec2 start, double track_deg, double speed_kt, double altitude_ft,
                    double duration, double dt = 5.0, double vertical_rate = 0.0) {
    return fixture::straight_track(cs, start, track_deg, speed_kt, altitude_ft, duration, dt, vertical_rate);
}

AircraftState state_at(Vec2 p, double alt) {
    AircraftState st;
    st.position = p;
    st.altitude_ft = alt;
    return st;
}

Sample sample(double track, double speed, double rate) {
    Sample s;
    s.track_deg = track;
    s.ground_speed_kt = speed;
    s.vertical_rate_fpm = rate;
    return s;
}

bool same_records(const TechnicalSafetyRecord& a, const TechnicalSafetyRecord& b) {
    if (a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const auto &x = a.records[i], &y = b.records[i];
        if (x.ac1 != y.ac1 || x.ac2 != y.ac2 || x.t_first != y.t_first || x.t_last != y.t_last ||
            x.cpa.t != y.cpa.t || x.cpa.distance_nm != y.cpa.distance_nm || x.cls != y.cls || !(x.source == y.source))
            return false;
    }
    return true;
}

ConflictRecord record(std::string a, std::string b, double t, RolloutSource src = {}) {
    ConflictRecord r;
    r.ac1 = std::move(a);
    r.ac2 = std::move(b);
    r.t_first = r.t_last = r.cpa.t = t;
    r.source = src;
    return r;
}

}  // namespace

TEST_CASE("separation needs both minima lost") {
    const SeparationMinima minima;
    CHECK(check_separation(state_at({0, 0}, 35000), state_at({4, 0}, 35000), minima));
    CHECK_FALSE(check_separation(state_at({0, 0}, 35000), state_at({4, 0}, 37000), minima));
    CHECK_FALSE(check_separation(state_at({0, 3.5}, 35000), state_at({0, -3.5}, 35000), minima));
    CHECK_FALSE(check_separation(state_at({0, 0}, 35000), state_at({5, 0}, 35000), minima));
    CHECK(check_separation(state_at({0, 0}, 35000), state_at({4.9, 0}, 35999), minima));
    CHECK_FALSE(check_separation(state_at({0, 0}, 35000), state_at({1, 0}, 36000), minima));
}

TEST_CASE("separation check is symmetric") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pos(-8, 8), alt(33000, 37000);
    for (int i = 0; i < 500; ++i) {
        const auto a = state_at({pos(rng), pos(rng)}, alt(rng));
        const auto b = state_at({pos(rng), pos(rng)}, alt(rng));
        CHECK(check_separation(a, b, {}) == check_separation(b, a, {}));
    }
}

TEST_CASE("closest point of approach examples") {
    const SeparationMinima minima;
    SUBCASE("head-on 16 NM at 480 kt") {
        const auto a = straight("A", {0, 0}, 90, 480, 35000, 120);
        const auto b = straight("B", {16, 0}, 270, 480, 35000, 120);
        const Cpa cpa = compute_cpa(a, b, minima);
        CHECK(cpa.t == doctest::Approx(60.0));
        CHECK(cpa.distance_nm == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(cpa.vertical_ft == doctest::Approx(0.0));
    }
    SUBCASE("parallel same speed picks the earliest tie") {
        const auto a = straight("A", {0, 0}, 90, 450, 35000, 300);
        const auto b = straight("B", {0, 10}, 90, 450, 35000, 300);
        const Cpa cpa = compute_cpa(a, b, minima);
        CHECK(cpa.t == doctest::Approx(0.0));
        CHECK(cpa.distance_nm == doctest::Approx(10.0));
    }
    SUBCASE("perpendicular crossing against the analytic oracle") {
        const auto a = straight("A", {-10, 0}, 90, 300, 35000, 300);
        const auto b = straight("B", {0, -10}, 0, 300, 35000, 300);
        const double v = kNmPerSecAt(300);
        const auto oracle_cpa = oracle::analytic_cpa({-10 - 0, 0 - (-10)}, {v - 0, 0 - v});
        CHECK(oracle_cpa.t == doctest::Approx(120.0));
        const Cpa cpa = compute_cpa(a, b, minima);
        CHECK(cpa.t == doctest::Approx(oracle_cpa.t));
        CHECK(cpa.distance_nm == doctest::Approx(oracle_cpa.distance).epsilon(1e-9));
    }
    SUBCASE("disjoint time ranges") {
        auto a = straight("A", {0, 0}, 90, 450, 35000, 100);
        auto b = straight("B", {0, 10}, 90, 450, 35000, 100);
        for (auto& s : b.samples) s.t += 500;
        CHECK_THROWS_AS(compute_cpa(a, b, minima), std::invalid_argument);
    }
}

TEST_CASE("CPA agrees with the analytic oracle on random straight encounters") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(-40, 40), track(0, 360), speed(300, 500);
    for (int i = 0; i < 200; ++i) {
        const double ta = track(rng), tb = track(rng), va = speed(rng), vb = speed(rng);
        const Vec2 pa{pos(rng), pos(rng)}, pb{pos(rng), pos(rng)};
        // Vertically separated so the argmin runs over the whole overlap.
        const auto a = straight("A", pa, ta, va, 30000, 1200, 1.0);
        const auto b = straight("B", pb, tb, vb, 40000, 1200, 1.0);
        auto vel = [](double trk, double kt) {
            const double r = trk * std::numbers::pi / 180.0;
            return oracle::P2{std::sin(r) * kNmPerSecAt(kt), std::cos(r) * kNmPerSecAt(kt)};
        };
        const auto va2 = vel(ta, va), vb2 = vel(tb, vb);
        auto expect = oracle::analytic_cpa({pb.x - pa.x, pb.y - pa.y}, {vb2.x - va2.x, vb2.y - va2.y});
        if (expect.t > 1200) continue;
        const Cpa cpa = compute_cpa(a, b, {});
        // Sampled at 1 s: the argmin lands within one step of the analytic time.
        CHECK(std::abs(cpa.t - expect.t) <= 1.0 + 1e-9);
        CHECK(cpa.distance_nm >= expect.distance - 1e-9);
        CHECK(cpa.distance_nm <= expect.distance + 1.0 * (kNmPerSecAt(va) + kNmPerSecAt(vb)));
    }
}

TEST_CASE("classification examples") {
    CHECK(classify(sample(90, 450, 0), sample(270, 450, 0)).label() == "LL/HO/Similar");
    CHECK(classify(sample(90, 510, 0), sample(90, 450, 0)).label() == "LL/P/AC1Faster");
    CHECK(classify(sample(90, 450, 0), sample(0, 450, -2000)).label() == "LD/CR/Similar");
    CHECK(classify(sample(90, 450, 2000), sample(0, 450, 0)).label() == "LA/CR/Similar");
    CHECK(classify(sample(90, 450, 2000), sample(90, 450, -2000)).label() == "AD/P/Similar");
    // Threshold edges.
    CHECK(classify(sample(0, 450, 100), sample(45, 470, 0)).label() == "LL/P/Similar");
    CHECK(classify(sample(0, 450, 101), sample(135, 471, 0)).label() == "LA/HO/AC2Faster");
    CHECK(classify(sample(0, 450, 0), sample(46, 450, 0)).lateral == LateralClass::CR);
    CHECK(classify(sample(10, 450, 0), sample(350, 450, 0)).lateral == LateralClass::P);
    CHECK(track_difference_deg(350, 10) == doctest::Approx(20.0));
}

TEST_CASE("classification under pair swap transposes only the speed class") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> track(0, 360), speed(300, 520), rate(-2500, 2500);
    for (int i = 0; i < 1000; ++i) {
        const auto a = sample(track(rng), speed(rng), i % 3 == 0 ? 0 : rate(rng));
        const auto b = sample(track(rng), speed(rng), i % 4 == 0 ? 0 : rate(rng));
        const auto ab = classify(a, b), ba = classify(b, a);
        CHECK(ab.vertical == ba.vertical);
        CHECK(ab.lateral == ba.lateral);
        const SpeedClass swapped = ab.speed == SpeedClass::AC1Faster   ? SpeedClass::AC2Faster
                                   : ab.speed == SpeedClass::AC2Faster ? SpeedClass::AC1Faster
                                                                       : SpeedClass::Similar;
        CHECK(ba.speed == swapped);
    }
}

TEST_CASE("the taxonomy has 36 distinct classes") {
    const auto all = ConflictClass::all();
    std::set<std::string> labels;
    for (int i = 0; i < 36; ++i) {
        CHECK(all[i].index() == i);
        CHECK(ConflictClass::from_index(i) == all[i]);
        CHECK(ConflictClass::parse(all[i].label()) == all[i]);
        labels.insert(all[i].label());
    }
    CHECK(labels.size() == 36);
    CHECK_THROWS(ConflictClass::parse("XX/HO/Similar"));
}

TEST_CASE("head-on pair on a shared centreline gives one record") {
    const LaneNetwork lanes({fixture::straight_route("E", {0, 0}, {100, 0}), fixture::straight_route("W", {100, 0}, {0, 0})},
                            3.5);
    World w = fixture::make_world(lanes, {{"ALPHA", "E"}, {"BRAVO", "W"}});
    RolloutSet set;
    set.nominal.trajectories = simulate(w, lanes, TwinConfig{}, 900.0).trajectories;
    const auto tsr = detect(set, {});
    REQUIRE(tsr.records.size() == 1);
    const auto& r = tsr.records[0];
    CHECK(r.ac1 == "ALPHA");
    CHECK(r.ac2 == "BRAVO");
    CHECK(r.cls.label() == "LL/HO/Similar");
    CHECK(r.t_first <= r.cpa.t);
    CHECK(r.cpa.t == doctest::Approx(400.0));
    CHECK(r.source.kind == RolloutSource::Kind::Nominal);
}

TEST_CASE("deconflicted traffic yields an empty record") {
    const LaneNetwork lanes({fixture::straight_route("E", {0, 0}, {100, 0}), fixture::straight_route("W", {100, 0}, {0, 0})},
                            3.5);
    World w = fixture::make_world(lanes, {{"ALPHA", "E", 0, 350, 350, 350}, {"BRAVO", "W", 0, 360, 360, 360}});
    const auto set = simulate_ensemble(w, lanes, TwinConfig{}, EnsembleConfig{.horizon_s = 900.0});
    CHECK(detect(set, {}).empty());
}

TEST_CASE("a crossing that is only unsafe under perturbation") {
    // Nominal: ALPHA is at the crossing 56 s before BRAVO, 5.3 NM at closest.
    const LaneNetwork lanes({fixture::straight_route("E", {0, 0}, {100, 0}),
                             fixture::straight_route("N", {50, -57.5}, {50, 60})},
                            3.5);
    World w = fixture::make_world(lanes, {{"ALPHA", "E", 0, 350, 350, 350, 480}, {"BRAVO", "N", 0, 350, 350, 350, 480}});
    EnsembleConfig ens;
    ens.horizon_s = 900.0;
    ens.counterfactuals = false;
    ens.seed = 21;
    const TwinConfig cfg;
    const auto set = simulate_ensemble(w, lanes, cfg, ens);
    const auto tsr = detect(set, {});
    REQUIRE_FALSE(tsr.empty());
    std::set<int> flagged;
    for (const auto& r : tsr.records) {
        CHECK(r.source.kind == RolloutSource::Kind::Perturbed);
        flagged.insert(r.source.index);
    }
    // Direct re-simulation of every perturbed draw agrees with the record.
    for (int idx = 1; idx <= ens.perturbed_count; ++idx) {
        World pw = w;
        pw.apply_perturbation(draw_perturbation(ens.seed, idx, {"ALPHA", "BRAVO"}, ens.spec), cfg);
        RolloutSet single;
        single.nominal.trajectories = simulate(pw, lanes, cfg, ens.horizon_s).trajectories;
        const bool unsafe = !oracle::brute_force_violations(single, 5.0, 1000.0).empty();
        CHECK(unsafe == (flagged.count(idx) == 1));
    }
    RolloutSet nominal_only;
    nominal_only.nominal = set.nominal;
    CHECK(oracle::brute_force_violations(nominal_only, 5.0, 1000.0).empty());
}

TEST_CASE("detector is complete and sound against a brute-force scan") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi), offset(-6, 6), entry(0, 240);
    std::uniform_int_distribution<int> level(34, 36);
    int conflicted = 0;
    for (int k = 0; k < 12; ++k) {
        // Straight routes through the neighbourhood of the origin.
        std::vector<Route> routes;
        std::vector<fixture::Flight> flights;
        for (int i = 0; i < 4; ++i) {
            const double a = angle(rng);
            const Vec2 dir{std::cos(a), std::sin(a)}, normal{-std::sin(a), std::cos(a)};
            const Vec2 shift = normal * offset(rng);
            const std::string id = "R" + std::to_string(i);
            routes.push_back(fixture::straight_route(id, shift - dir * 60.0, shift + dir * 60.0));
            const int fl = level(rng) * 10;
            flights.push_back({"AC" + std::to_string(i), id, entry(rng), fl, fl, fl, 420.0 + 20.0 * i});
        }
        const LaneNetwork lanes(routes, 3.5);
        const World w = fixture::make_world(lanes, flights);
        EnsembleConfig ens;
        ens.perturbed_count = 4;
        ens.horizon_s = 1500.0;
        ens.seed = 100 + k;
        const auto set = simulate_ensemble(w, lanes, TwinConfig{}, ens);
        const auto tsr = detect(set, {});
        CHECK(same_records(tsr, detect_serial(set, {})));
        const auto truth = oracle::brute_force_violations(set, 5.0, 1000.0);
        if (!truth.empty()) ++conflicted;

        for (const auto& [label, lo, hi, t] : truth) {
            const bool covered = std::any_of(tsr.records.begin(), tsr.records.end(), [&](const ConflictRecord& r) {
                return r.source.label() == label && r.ac1 == lo && r.ac2 == hi && r.t_first <= t + 1e-9 &&
                       t <= r.t_last + 1e-9;
            });
            CHECK(covered);
        }
        for (const auto& r : tsr.records) {
            CHECK(truth.count({r.source.label(), r.ac1, r.ac2, r.t_first}) == 1);
            CHECK(truth.count({r.source.label(), r.ac1, r.ac2, r.t_last}) == 1);
            CHECK(r.t_first <= r.cpa.t + 1e-9);
            CHECK(r.cpa.t <= r.t_last + 1e-9);
            // CPA lower-bounds every lateral distance inside the interval.
            const Rollout* src = nullptr;
            for (const Rollout* ro : set.all())
                if (ro->source == r.source) src = ro;
            REQUIRE(src);
            const Trajectory *ta = nullptr, *tb = nullptr;
            for (const auto& tr : src->trajectories) {
                if (tr.callsign == r.ac1) ta = &tr;
                if (tr.callsign == r.ac2) tb = &tr;
            }
            REQUIRE(ta);
            REQUIRE(tb);
            for (const auto& sa : ta->samples) {
                if (sa.t < r.t_first - 1e-9 || sa.t > r.t_last + 1e-9) continue;
                const Sample* sb = tb->at(sa.t);
                REQUIRE(sb);
                CHECK(r.cpa.distance_nm <= distance(sa.position, sb->position) + 1e-12);
            }
        }
        CHECK(std::is_sorted(tsr.records.begin(), tsr.records.end(), record_less));
    }
    // The random traffic did exercise the detector.
    CHECK(conflicted >= 3);
}

TEST_CASE("earliest conflict ordering") {
    TechnicalSafetyRecord tsr;
    CHECK_THROWS_AS(earliest_conflict(tsr), EmptyRecordError);
    tsr.records = {record("A", "B", 200), record("C", "D", 100)};
    CHECK(earliest_conflict(tsr).t_first == 100);
    tsr.records = {record("A", "B", 150)};
    CHECK(earliest_conflict(tsr).ac1 == "A");
    tsr.records = {record("A", "C", 100), record("A", "B", 100)};
    CHECK(earliest_conflict(tsr).ac2 == "B");
    const RolloutSource perturbed{RolloutSource::Kind::Perturbed, 3, 0};
    const RolloutSource counterfactual{RolloutSource::Kind::Counterfactual, 0, 0};
    tsr.records = {record("A", "B", 100, counterfactual), record("A", "B", 100, perturbed)};
    CHECK(earliest_conflict(tsr).source == perturbed);
    tsr.records.push_back(record("A", "B", 100));
    CHECK(earliest_conflict(tsr).source.kind == RolloutSource::Kind::Nominal);
}

TEST_CASE("aircraft on outer lanes with at least 7 NM spacing never lose lateral separation") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> speed(300, 520), entry(0, 400);
    int checked = 0;
    for (int k = 0; k < 20; ++k) {
        const Route r = fixture::random_route(rng, "L" + std::to_string(k));
        const LaneNetwork lanes({r}, 3.5);
        if (min_lane_spacing(lanes.lane(r.id, LaneSide::Left), lanes.lane(r.id, LaneSide::Right), 0.1) < 7.0 - 1e-6)
            continue;
        ++checked;
        World w = fixture::make_world(lanes, {{"LEFT", r.id, 0, 350, 350, 350, speed(rng)},
                                              {"RIGHT", r.id, entry(rng), 350, 350, 350, speed(rng)}});
        auto put_on = [&](const std::string& cs, LaneSide side) {
            FlightPlan& fp = w.plan.plans.at(cs);
            Manoeuvre m;
            m.strategy_id = "lanes";
            PlannedAction pa;
            pa.trigger = Condition::immediate();
            pa.action = Action::fly_lane(r.id, side);
            pa.completion = Condition::never();
            m.phases = {pa};
            fp = splice(fp, {fp.chain(Axis::Lateral).front().id}, m);
        };
        put_on("LEFT", LaneSide::Left);
        put_on("RIGHT", LaneSide::Right);
        // Zero pilot delay so both sit on their lanes from the first step.
        EnsembleConfig ens;
        ens.spec.max_pilot_delay_s = 0.0;
        ens.perturbed_count = 5;
        ens.horizon_s = 3600.0;
        ens.counterfactuals = false;
        ens.seed = k;
        const auto set = simulate_ensemble(w, lanes, TwinConfig{}, ens);
        CHECK(detect(set, {}).empty());
    }
    CHECK(checked >= 15);
}
