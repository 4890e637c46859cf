#include "skylane/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace skylane {

const char* to_string(LaneSide side) {
    switch (side) {
    case LaneSide::Left: return "Left";
    case LaneSide::Right: return "Right";
    default: return "Centre";
    }
}

LaneSide lane_side_from_string(const std::string& s) {
    if (s == "Left") return LaneSide::Left;
    if (s == "Right") return LaneSide::Right;
    if (s == "Centre" || s == "Center") return LaneSide::Centre;
    throw GeometryError("unknown lane designation '" + s + "'");
}

int Route::fix_index(const std::string& fix_id) const {
    for (std::size_t i = 0; i < fixes.size(); ++i) {
        if (fixes[i].id == fix_id) return static_cast<int>(i);
    }
    return -1;
}

void validate_route(const Route& route) {
    if (route.fixes.size() < 2) {
        throw GeometryError("route " + route.id + " needs at least 2 fixes");
    }
    for (std::size_t i = 0; i < route.fixes.size(); ++i) {
        const auto& f = route.fixes[i];
        if (!std::isfinite(f.position.x) || !std::isfinite(f.position.y)) {
            throw GeometryError("route " + route.id + ": fix " + f.id + " has non-finite coordinates");
        }
        if (i > 0 && distance(f.position, route.fixes[i - 1].position) < 1e-9) {
            throw GeometryError("route " + route.id + ": zero-length segment at fix " + f.id);
        }
    }
}

Lane::Lane(std::string route_id, LaneSide designation, std::vector<Vec2> polyline, double offset)
    : route_id_(std::move(route_id)), designation_(designation), polyline_(std::move(polyline)), offset_(offset) {
    cumulative_.reserve(polyline_.size());
    double s = 0.0;
    for (std::size_t i = 0; i < polyline_.size(); ++i) {
        if (i > 0) s += distance(polyline_[i - 1], polyline_[i]);
        cumulative_.push_back(s);
    }
}

std::size_t Lane::segment_at(double s) const {
    if (polyline_.size() < 2) return 0;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t idx = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    return std::min(idx, polyline_.size() - 2);
}

Vec2 Lane::direction_at(double s) const {
    if (polyline_.size() < 2) return {1.0, 0.0};
    const auto i = segment_at(s);
    const Vec2 d = polyline_[i + 1] - polyline_[i];
    const double len = norm(d);
    return len > 0.0 ? d * (1.0 / len) : Vec2{1.0, 0.0};
}

const Lane& LaneTriple::get(LaneSide side) const {
    switch (side) {
    case LaneSide::Left: return left;
    case LaneSide::Right: return right;
    default: return centre;
    }
}

std::vector<double> interior_angles_deg(std::span<const Vec2> polyline) {
    std::vector<double> out;
    for (std::size_t i = 1; i + 1 < polyline.size(); ++i) {
        const Vec2 a = polyline[i - 1] - polyline[i];
        const Vec2 b = polyline[i + 1] - polyline[i];
        const double c = std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0);
        out.push_back(std::acos(c) * 180.0 / std::numbers::pi);
    }
    return out;
}

std::vector<Vec2> offset_polyline(std::span<const Vec2> centre, double offset, const LaneBuildOptions& opts,
                                  const std::string& route_id, std::span<const Fix> fixes) {
    const std::size_t n = centre.size();
    std::vector<Vec2> normals;
    normals.reserve(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const Vec2 d = centre[i + 1] - centre[i];
        normals.push_back(left_normal(d * (1.0 / norm(d))));
    }

    const auto angles = interior_angles_deg(centre);
    for (std::size_t k = 0; k < angles.size(); ++k) {
        if (angles[k] < opts.min_interior_angle_deg) {
            const std::string fix = k + 1 < fixes.size() ? fixes[k + 1].id : std::to_string(k + 1);
            throw GeometryError("route " + route_id + ": turn at fix " + fix + " has interior angle " +
                                std::to_string(angles[k]) + " deg, below the miter limit");
        }
    }

    std::vector<Vec2> out;
    out.reserve(n);
    out.push_back(centre[0] + normals[0] * offset);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const Vec2 n1 = normals[i - 1];
        const Vec2 n2 = normals[i];
        // Miter vector: intersection of the two offset lines relative to the vertex.
        const double denom = 1.0 + dot(n1, n2);
        out.push_back(centre[i] + (n1 + n2) * (offset / denom));
    }
    out.push_back(centre[n - 1] + normals[n - 2] * offset);
    return out;
}

LaneTriple build_lanes(const Route& route, double offset_nm, const LaneBuildOptions& opts) {
    validate_route(route);
    if (!(offset_nm >= 0.0) || !std::isfinite(offset_nm)) {
        throw GeometryError("lane offset must be non-negative");
    }
    std::vector<Vec2> centre;
    centre.reserve(route.fixes.size());
    for (const auto& f : route.fixes) centre.push_back(f.position);

    auto left = offset_polyline(centre, offset_nm, opts, route.id, route.fixes);
    auto right = offset_polyline(centre, -offset_nm, opts, route.id, route.fixes);
    return LaneTriple{
        Lane(route.id, LaneSide::Left, std::move(left), offset_nm),
        Lane(route.id, LaneSide::Centre, centre, 0.0),
        Lane(route.id, LaneSide::Right, std::move(right), -offset_nm),
    };
}

namespace {

struct Projection {
    double s;
    double signed_dist;
    double dist;
    bool before_start;
    bool after_end;
};

Projection project(const Lane& lane, Vec2 p) {
    const auto& pts = lane.polyline();
    const auto& cum = lane.vertex_s();
    Projection best{0.0, 0.0, std::numeric_limits<double>::infinity(), false, false};
    if (pts.size() == 1) {
        const double d = distance(p, pts[0]);
        return {0.0, d, d, false, false};
    }
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const Vec2 a = pts[i];
        const Vec2 ab = pts[i + 1] - a;
        const double len2 = dot(ab, ab);
        const double raw = dot(p - a, ab) / len2;
        const double t = std::clamp(raw, 0.0, 1.0);
        const Vec2 foot = a + ab * t;
        const double d = distance(p, foot);
        if (d < best.dist - 1e-12) {
            const double len = std::sqrt(len2);
            const double side = cross(ab * (1.0 / len), p - a);
            best.s = cum[i] + t * len;
            best.dist = d;
            best.signed_dist = side >= 0.0 ? d : -d;
            best.before_start = (i == 0 && raw < 0.0);
            best.after_end = (i + 2 == pts.size() && raw > 1.0);
        }
    }
    return best;
}

}  // namespace

AlongTrack along_track(const Lane& lane, Vec2 p) {
    const auto pr = project(lane, p);
    return AlongTrack{pr.s, pr.signed_dist, pr.before_start || pr.after_end};
}

Vec2 point_at(const Lane& lane, double s) {
    const double len = lane.length();
    if (s < -1e-9 || s > len + 1e-9 || !std::isfinite(s)) {
        throw std::out_of_range("point_at: s=" + std::to_string(s) + " outside lane length " + std::to_string(len));
    }
    const auto& pts = lane.polyline();
    if (pts.size() == 1) return pts[0];
    s = std::clamp(s, 0.0, len);
    const auto i = lane.segment_at(s);
    const double seg = lane.vertex_s()[i + 1] - lane.vertex_s()[i];
    const double t = seg > 0.0 ? (s - lane.vertex_s()[i]) / seg : 0.0;
    return pts[i] + (pts[i + 1] - pts[i]) * t;
}

double point_polyline_distance(Vec2 p, std::span<const Vec2> polyline) {
    if (polyline.empty()) return std::numeric_limits<double>::infinity();
    if (polyline.size() == 1) return distance(p, polyline[0]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
        const Vec2 a = polyline[i];
        const Vec2 ab = polyline[i + 1] - a;
        const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
        best = std::min(best, distance(p, a + ab * t));
    }
    return best;
}

namespace {

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    const double d1 = cross(q2 - q1, p1 - q1);
    const double d2 = cross(q2 - q1, p2 - q1);
    const double d3 = cross(p2 - p1, q1 - p1);
    const double d4 = cross(p2 - p1, q2 - p1);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

bool polylines_cross(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    for (std::size_t i = 0; i + 1 < a.size(); ++i)
        for (std::size_t j = 0; j + 1 < b.size(); ++j)
            if (segments_intersect(a[i], a[i + 1], b[j], b[j + 1])) return true;
    return false;
}

std::size_t sample_count(const Lane& a, double step) {
    if (!(step > 0.0)) return 1;
    return static_cast<std::size_t>(std::floor(a.length() / step)) + 1;
}

double vertex_min(const Lane& a, const Lane& b) {
    double best = std::numeric_limits<double>::infinity();
    for (Vec2 v : a.polyline()) best = std::min(best, point_polyline_distance(v, b.polyline()));
    for (Vec2 v : b.polyline()) best = std::min(best, point_polyline_distance(v, a.polyline()));
    return best;
}

}  // namespace

double min_lane_spacing_serial(const Lane& a, const Lane& b, double sample_step) {
    if (a.polyline().empty() || b.polyline().empty()) throw GeometryError("min_lane_spacing: empty lane");
    if (polylines_cross(a.polyline(), b.polyline())) return 0.0;
    double best = vertex_min(a, b);
    const std::size_t n = sample_count(a, sample_step);
    for (std::size_t k = 0; k < n; ++k) {
        const double s = std::min(a.length(), static_cast<double>(k) * sample_step);
        best = std::min(best, point_polyline_distance(point_at(a, s), b.polyline()));
    }
    return best;
}

double min_lane_spacing(const Lane& a, const Lane& b, double sample_step) {
    if (a.polyline().empty() || b.polyline().empty()) throw GeometryError("min_lane_spacing: empty lane");
    if (polylines_cross(a.polyline(), b.polyline())) return 0.0;
    double best = vertex_min(a, b);
    const auto n = static_cast<long long>(sample_count(a, sample_step));
#pragma omp parallel for reduction(min : best) schedule(static)
    for (long long k = 0; k < n; ++k) {
        const double s = std::min(a.length(), static_cast<double>(k) * sample_step);
        best = std::min(best, point_polyline_distance(point_at(a, s), b.polyline()));
    }
    return best;
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> polygon, double eps) {
    const std::size_t n = polygon.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = polygon[i];
        const Vec2 b = polygon[(i + 1) % n];
        const Vec2 ab = b - a;
        const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
        if (distance(p, a + ab * t) <= eps) return true;
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = polygon[i];
        const Vec2 b = polygon[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

LaneNetwork::LaneNetwork(const std::vector<Route>& routes, double offset_nm, const LaneBuildOptions& opts)
    : offset_nm_(offset_nm) {
    for (const auto& r : routes) {
        if (routes_.count(r.id)) throw GeometryError("duplicate route id " + r.id);
        auto lanes = build_lanes(r, offset_nm, opts);
        routes_.emplace(r.id, r);
        lanes_.emplace(std::make_pair(r.id, LaneSide::Left), std::move(lanes.left));
        lanes_.emplace(std::make_pair(r.id, LaneSide::Centre), std::move(lanes.centre));
        lanes_.emplace(std::make_pair(r.id, LaneSide::Right), std::move(lanes.right));
    }
}

const Lane& LaneNetwork::lane(const std::string& route_id, LaneSide side) const {
    auto it = lanes_.find({route_id, side});
    if (it == lanes_.end()) throw GeometryError("unknown lane " + route_id + "/" + to_string(side));
    return it->second;
}

const Route& LaneNetwork::route(const std::string& route_id) const {
    auto it = routes_.find(route_id);
    if (it == routes_.end()) throw GeometryError("unknown route " + route_id);
    return it->second;
}

}  // namespace skylane
