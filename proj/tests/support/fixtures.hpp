#pragma once

// Scenario and route builders shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "skylane/resolver.hpp"
#include "skylane/runner.hpp"

namespace fixture {

using namespace skylane;

inline std::filesystem::path scenario_path(const std::string& name) {
    return std::filesystem::path(SKYLANE_SOURCE_DIR) / "scenarios" / (name + ".json");
}

inline Route straight_route(const std::string& id, Vec2 from, Vec2 to) {
    return {id, {{id + "_A", from}, {id + "_B", to}}};
}

inline Route random_route_unchecked(std::mt19937_64& rng, const std::string& id, double min_interior_deg) {
    std::uniform_int_distribution<int> fix_count(2, 8);
    std::uniform_real_distribution<double> leg(30.0, 80.0);
    std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
    const double max_turn = (180.0 - min_interior_deg) * std::numbers::pi / 180.0;
    std::uniform_real_distribution<double> turn(-max_turn, max_turn);
    const int n = fix_count(rng);
    Route r{id, {}};
    Vec2 p{0.0, 0.0};
    double h = heading(rng);
    for (int i = 0; i < n; ++i) {
        r.fixes.push_back({id + "_" + std::to_string(i), p});
        if (i > 0) h += turn(rng);
        const double len = leg(rng);
        p = p + Vec2{std::cos(h), std::sin(h)} * len;
    }
    return r;
}

inline double segment_gap(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    auto point_seg = [](Vec2 p, Vec2 s0, Vec2 s1) {
        const Vec2 v = s1 - s0;
        const double u = std::clamp(dot(p - s0, v) / dot(v, v), 0.0, 1.0);
        return distance(p, s0 + v * u);
    };
    const double o1 = cross(b - a, c - a), o2 = cross(b - a, d - a);
    const double o3 = cross(d - c, a - c), o4 = cross(d - c, b - c);
    if (o1 * o2 < 0 && o3 * o4 < 0) return 0.0;
    return std::min({point_seg(a, c, d), point_seg(b, c, d), point_seg(c, a, b), point_seg(d, a, b)});
}

// Random route with 2..8 fixes, legs of 30..80 NM and every interior angle
// at least `min_interior_deg`. Non-adjacent legs stay at least `clearance_nm`
// apart, so the route never doubles back over itself.
inline Route random_route(std::mt19937_64& rng, const std::string& id, double min_interior_deg = 30.0,
                          double clearance_nm = 14.0) {
    for (;;) {
        Route r = random_route_unchecked(rng, id, min_interior_deg);
        bool clear = true;
        for (std::size_t i = 0; clear && i + 1 < r.fixes.size(); ++i) {
            for (std::size_t j = i + 2; clear && j + 1 < r.fixes.size(); ++j) {
                clear = segment_gap(r.fixes[i].position, r.fixes[i + 1].position, r.fixes[j].position,
                                    r.fixes[j + 1].position) >= clearance_nm;
            }
        }
        if (clear) return r;
    }
}

// Constant-velocity trajectory; track in degrees clockwise from north.
inline Trajectory straight_track(const std::string& cs, Vec2 start, double track_deg, double speed_kt,
                                 double altitude_ft, double duration, double dt = 5.0, double vertical_rate = 0.0) {
    Trajectory tr;
    tr.callsign = cs;
    tr.route_id = cs;
    const double rad = track_deg * std::numbers::pi / 180.0;
    const Vec2 dir{std::sin(rad), std::cos(rad)};
    for (double t = 0.0; t <= duration + 1e-9; t += dt) {
        Sample s;
        s.t = t;
        s.position = start + dir * (speed_kt / 3600.0 * t);
        s.altitude_ft = altitude_ft + vertical_rate * t / 60.0;
        s.ground_speed_kt = speed_kt;
        s.vertical_rate_fpm = vertical_rate;
        s.track_deg = track_deg;
        tr.samples.push_back(s);
    }
    return tr;
}

struct Flight {
    std::string callsign;
    std::string route;
    double entry_time = 0.0;
    int entry_fl = 350;
    int pfl = 350;
    int exit_fl = 350;
    double speed_kt = 450.0;
};

// A world with every flight scheduled and given its nominal plan.
inline World make_world(const LaneNetwork& lanes, const std::vector<Flight>& flights,
                        const PerformanceParams& perf = {}) {
    World w;
    for (const auto& f : flights) {
        const Route& route = lanes.route(f.route);
        const ExitCondition exit{route.fixes.back().id, f.exit_fl};
        w.plan.plans[f.callsign] =
            build_nominal_plan({f.callsign, f.route, f.entry_fl * 100.0, f.speed_kt, 0.0}, route, f.pfl, exit, perf);
        w.schedule({f.callsign, f.route, f.entry_time, f.entry_fl * 100.0, f.speed_kt});
    }
    w.plan.revision = 1;
    return w;
}

// Scenario document for reciprocal straight routes with two same-level aircraft.
inline Scenario headon_scenario(std::uint64_t seed = 7) {
    Scenario sc;
    sc.name = "headon-fixture";
    sc.seed = seed;
    sc.boundary = {{-10, -40}, {110, -40}, {110, 40}, {-10, 40}};
    sc.floor_fl = 200;
    sc.ceiling_fl = 450;
    sc.fixes = {{"WEST", {0, 0}}, {"EAST", {100, 0}}};
    sc.routes = {{"EASTBOUND", {{"WEST", {0, 0}}, {"EAST", {100, 0}}}}, {"WESTBOUND", {{"EAST", {100, 0}}, {"WEST", {0, 0}}}}};
    AircraftSpec a;
    a.callsign = "ALPHA1";
    a.route_id = "EASTBOUND";
    a.entry_fl = a.pfl = 350;
    a.exit = {"EAST", 350};
    AircraftSpec b = a;
    b.callsign = "BRAVO2";
    b.route_id = "WESTBOUND";
    b.exit = {"WEST", 350};
    sc.aircraft = {a, b};
    sc.sim.horizon_s = 1200.0;
    return sc;
}

}  // namespace fixture
