#include "doctest.h"

#include <random>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "skylane/geometry.hpp"

using namespace skylane;

namespace {

Route make_route(std::vector<Vec2> pts) {
    Route r{"R", {}};
    for (std::size_t i = 0; i < pts.size(); ++i) r.fixes.push_back({"F" + std::to_string(i), pts[i]});
    return r;
}

}  // namespace

TEST_CASE("straight route offsets to parallel lanes") {
    const auto lanes = build_lanes(make_route({{0, 0}, {20, 0}}), 3.5);
    REQUIRE(lanes.left.polyline().size() == 2);
    CHECK(lanes.left.polyline()[0].x == doctest::Approx(0.0));
    CHECK(lanes.left.polyline()[0].y == doctest::Approx(3.5));
    CHECK(lanes.left.polyline()[1].x == doctest::Approx(20.0));
    CHECK(lanes.left.polyline()[1].y == doctest::Approx(3.5));
    CHECK(lanes.right.polyline()[1].y == doctest::Approx(-3.5));
    CHECK(lanes.left.offset() == doctest::Approx(3.5));
    CHECK(lanes.right.offset() == doctest::Approx(-3.5));
}

TEST_CASE("right-angle turn transition node matches line intersection") {
    const auto lanes = build_lanes(make_route({{0, 0}, {10, 0}, {10, 10}}), 3.5);
    // Left of an east leg is y = 3.5; left of the north leg is x = 6.5.
    const auto expected = oracle::line_intersection({0, 3.5}, {1, 0}, {6.5, 0}, {0, 1});
    REQUIRE(expected);
    const Vec2 node = lanes.left.polyline()[1];
    CHECK(node.x == doctest::Approx(expected->x).epsilon(1e-12));
    CHECK(node.y == doctest::Approx(expected->y).epsilon(1e-12));
    CHECK(node.x == doctest::Approx(6.5));
    CHECK(node.y == doctest::Approx(3.5));
}

TEST_CASE("zero offset reproduces the fix polyline") {
    const Route r = make_route({{0, 0}, {30, 5}, {45, 40}, {90, 42}});
    const auto lanes = build_lanes(r, 3.5);
    REQUIRE(lanes.centre.polyline().size() == r.fixes.size());
    for (std::size_t i = 0; i < r.fixes.size(); ++i) CHECK(lanes.centre.polyline()[i] == r.fixes[i].position);
    const auto zero = offset_polyline(lanes.centre.polyline(), 0.0);
    for (std::size_t i = 0; i < r.fixes.size(); ++i) CHECK(zero[i] == r.fixes[i].position);
}

TEST_CASE("turn sharper than the miter limit is rejected with the fix named") {
    // Interior angle of about 20 degrees at F1.
    const Route r = make_route({{0, 0}, {50, 0}, {3, 17}});
    try {
        build_lanes(r, 3.5);
        FAIL("expected a geometry error");
    } catch (const GeometryError& e) {
        CHECK(std::string(e.what()).find("F1") != std::string::npos);
    }
}

TEST_CASE("invalid routes are rejected") {
    CHECK_THROWS_AS(validate_route(make_route({{0, 0}})), GeometryError);
    CHECK_THROWS_AS(validate_route(make_route({{0, 0}, {0, 0}})), GeometryError);
    CHECK_THROWS_AS(build_lanes(make_route({{0, 0}, {10, 0}}), -1.0), GeometryError);
}

TEST_CASE("along-track projection") {
    const Lane lane("R", LaneSide::Centre, {{0, 0}, {10, 0}}, 0.0);
    auto at = along_track(lane, {4, 1});
    CHECK(at.s == doctest::Approx(4.0));
    CHECK(at.cross_track == doctest::Approx(1.0));
    CHECK_FALSE(at.clamped);

    at = along_track(lane, {7, 0});
    CHECK(at.cross_track == doctest::Approx(0.0));

    at = along_track(lane, {12, 0});
    CHECK(at.s == doctest::Approx(10.0));
    CHECK(at.clamped);
}

TEST_CASE("point_at walks arc length") {
    const Lane straight("R", LaneSide::Centre, {{0, 0}, {10, 0}}, 0.0);
    CHECK(point_at(straight, 3.0) == Vec2{3.0, 0.0});
    CHECK(point_at(straight, 0.0) == Vec2{0.0, 0.0});
    const Lane bent("R", LaneSide::Centre, {{0, 0}, {10, 0}, {10, 10}}, 0.0);
    const Vec2 p = point_at(bent, 15.0);
    CHECK(p.x == doctest::Approx(10.0));
    CHECK(p.y == doctest::Approx(5.0));
    CHECK_THROWS_AS(point_at(bent, 20.5), std::out_of_range);
    CHECK_THROWS_AS(point_at(bent, -0.5), std::out_of_range);
}

TEST_CASE("along_track inverts point_at on random lanes") {
    std::mt19937_64 rng(42);
    for (int k = 0; k < 30; ++k) {
        const Route r = fixture::random_route(rng, "Q" + std::to_string(k));
        const auto lanes = build_lanes(r, 3.5);
        for (const Lane* lane : {&lanes.left, &lanes.centre, &lanes.right}) {
            std::uniform_real_distribution<double> pick(0.0, lane->length());
            for (int i = 0; i < 20; ++i) {
                const double s = pick(rng);
                const Vec2 p = point_at(*lane, s);
                const auto at = along_track(*lane, p);
                CHECK(std::abs(at.cross_track) < 1e-9);
                CHECK(distance(point_at(*lane, at.s), p) < 1e-9);
            }
        }
    }
}

TEST_CASE("lane spacing on a straight route") {
    const auto lanes = build_lanes(make_route({{0, 0}, {20, 0}}), 3.5);
    CHECK(min_lane_spacing(lanes.left, lanes.right, 0.1) == doctest::Approx(7.0));
    CHECK(min_lane_spacing(lanes.left, lanes.left, 0.1) == doctest::Approx(0.0));
}

TEST_CASE("lane spacing through a right-angle turn agrees with dense sampling") {
    const auto lanes = build_lanes(make_route({{0, 0}, {10, 0}, {10, 10}}), 3.5);
    const double fast = min_lane_spacing(lanes.left, lanes.right, 0.1);
    const double dense = oracle::dense_min_spacing(oracle::to_points(lanes.left.polyline()),
                                                   oracle::to_points(lanes.right.polyline()), 0.001);
    CHECK(fast >= 7.0 - 1e-6);
    CHECK(fast <= dense + 1e-9);
    CHECK(fast == doctest::Approx(dense).epsilon(1e-3));
}

TEST_CASE("parallel and serial lane spacing agree") {
    std::mt19937_64 rng(7);
    for (int k = 0; k < 25; ++k) {
        const auto lanes = build_lanes(fixture::random_route(rng, "S" + std::to_string(k)), 3.5);
        CHECK(min_lane_spacing(lanes.left, lanes.right, 0.05) ==
              min_lane_spacing_serial(lanes.left, lanes.right, 0.05));
    }
}

TEST_CASE("fuzzed routes keep 2x offset spacing and the lane invariants") {
    std::mt19937_64 rng(2024);
    for (int k = 0; k < 60; ++k) {
        const Route r = fixture::random_route(rng, "Z" + std::to_string(k));
        const auto lanes = build_lanes(r, 3.5);
        CHECK(lanes.left.polyline().size() == r.fixes.size());
        CHECK(min_lane_spacing(lanes.left, lanes.right, 0.1) >= 7.0 - 1e-6);
        // Every lane vertex is on the offset lines of its adjacent legs.
        const auto centre = oracle::to_points(lanes.centre.polyline());
        for (const Lane* lane : {&lanes.left, &lanes.right}) {
            for (std::size_t i = 0; i < centre.size(); ++i) {
                const Vec2 v = lane->polyline()[i];
                for (std::size_t leg : {i == 0 ? 0 : i - 1, std::min(i, centre.size() - 2)}) {
                    const oracle::P2 a = centre[leg], b = centre[leg + 1];
                    const double len = std::hypot(b.x - a.x, b.y - a.y);
                    const double signed_dist = ((b.x - a.x) * (v.y - a.y) - (b.y - a.y) * (v.x - a.x)) / len;
                    CHECK(signed_dist == doctest::Approx(lane->offset()).epsilon(1e-9));
                }
            }
        }
    }
}

TEST_CASE("interior angles and point in polygon") {
    const std::vector<Vec2> poly{{0, 0}, {10, 0}, {10, 10}};
    const auto angles = interior_angles_deg(poly);
    REQUIRE(angles.size() == 1);
    CHECK(angles[0] == doctest::Approx(90.0));
    const std::vector<Vec2> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    CHECK(point_in_polygon({5, 5}, square));
    CHECK(point_in_polygon({10, 5}, square));
    CHECK_FALSE(point_in_polygon({11, 5}, square));
}

TEST_CASE("lane network lookups") {
    const LaneNetwork net({make_route({{0, 0}, {20, 0}})}, 3.5);
    CHECK(net.has_route("R"));
    CHECK_FALSE(net.has_route("X"));
    CHECK(net.lane("R", LaneSide::Right).designation() == LaneSide::Right);
    CHECK_THROWS(net.lane("X", LaneSide::Left));
}
