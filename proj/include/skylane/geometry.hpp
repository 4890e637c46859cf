#pragma once

// Systemised-airspace lane network in a flat local Cartesian frame (NM).

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace skylane {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(Vec2 a, double k) { return {a.x * k, a.y * k}; }
    friend Vec2 operator*(double k, Vec2 a) { return {a.x * k, a.y * k}; }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
// Left-hand unit normal of a direction (counter-clockwise rotation).
inline Vec2 left_normal(Vec2 dir) { return {-dir.y, dir.x}; }

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LaneSide { Left, Centre, Right };

const char* to_string(LaneSide side);
LaneSide lane_side_from_string(const std::string& s);

// Signed offset multiplier: Left = +1, Centre = 0, Right = -1.
inline double side_sign(LaneSide side) {
    switch (side) {
    case LaneSide::Left: return 1.0;
    case LaneSide::Right: return -1.0;
    default: return 0.0;
    }
}

struct Fix {
    std::string id;
    Vec2 position;
};

struct Route {
    std::string id;
    std::vector<Fix> fixes;

    // Index of the fix with the given id, or -1.
    int fix_index(const std::string& fix_id) const;
};

// Throws GeometryError if the route has < 2 fixes, repeated consecutive fixes
// or non-finite coordinates.
void validate_route(const Route& route);

class Lane {
public:
    Lane() = default;
    Lane(std::string route_id, LaneSide designation, std::vector<Vec2> polyline, double offset);

    const std::string& route_id() const { return route_id_; }
    LaneSide designation() const { return designation_; }
    const std::vector<Vec2>& polyline() const { return polyline_; }
    double offset() const { return offset_; }
    double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
    // Arc length at each polyline vertex; vertex i corresponds to route fix i.
    const std::vector<double>& vertex_s() const { return cumulative_; }

    // Segment index containing arc length s (clamped to valid range).
    std::size_t segment_at(double s) const;
    // Unit direction of the segment containing s.
    Vec2 direction_at(double s) const;

private:
    std::string route_id_;
    LaneSide designation_ = LaneSide::Centre;
    std::vector<Vec2> polyline_;
    double offset_ = 0.0;
    std::vector<double> cumulative_;
};

struct LaneTriple {
    Lane left;
    Lane centre;
    Lane right;

    const Lane& get(LaneSide side) const;
};

struct LaneBuildOptions {
    // Turns whose interior angle is below this are rejected (degrees).
    double min_interior_angle_deg = 30.0;
};

// Miter-joined parallel offsets of the route centreline. Left/right lanes sit
// at +/- offset_nm; interior vertices are the intersections of the adjacent
// offset lines.
LaneTriple build_lanes(const Route& route, double offset_nm, const LaneBuildOptions& opts = {});

// Single offset polyline (offset may be 0, positive = left of travel).
std::vector<Vec2> offset_polyline(std::span<const Vec2> centre, double offset, const LaneBuildOptions& opts = {},
                                  const std::string& route_id = {}, std::span<const Fix> fixes = {});

struct AlongTrack {
    double s = 0.0;
    double cross_track = 0.0;  // positive = left of travel
    bool clamped = false;      // projection fell beyond a lane endpoint
};

AlongTrack along_track(const Lane& lane, Vec2 p);

// Throws std::out_of_range if s is outside [0, length] (1e-9 slack).
Vec2 point_at(const Lane& lane, double s);

double point_polyline_distance(Vec2 p, std::span<const Vec2> polyline);

// Minimum separation between two lanes. Samples lane `a` every sample_step NM,
// and always includes the vertices of both lanes in both directions, which
// makes the result exact for piecewise-linear lanes.
double min_lane_spacing(const Lane& a, const Lane& b, double sample_step);
double min_lane_spacing_serial(const Lane& a, const Lane& b, double sample_step);

// Interior angle (degrees) at each interior vertex of a polyline; 180 = straight.
std::vector<double> interior_angles_deg(std::span<const Vec2> polyline);

// Ray-casting point-in-polygon; points on the boundary count as inside.
bool point_in_polygon(Vec2 p, std::span<const Vec2> polygon, double eps = 1e-9);

// All lanes of all routes, keyed by (route id, side).
class LaneNetwork {
public:
    LaneNetwork() = default;
    LaneNetwork(const std::vector<Route>& routes, double offset_nm, const LaneBuildOptions& opts = {});

    const Lane& lane(const std::string& route_id, LaneSide side) const;
    bool has_route(const std::string& route_id) const { return routes_.count(route_id) != 0; }
    const Route& route(const std::string& route_id) const;
    double offset_nm() const { return offset_nm_; }
    const std::map<std::string, Route>& routes() const { return routes_; }

private:
    double offset_nm_ = 3.5;
    std::map<std::string, Route> routes_;
    std::map<std::pair<std::string, LaneSide>, Lane> lanes_;
};

}  // namespace skylane
