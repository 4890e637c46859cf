#pragma once

// Airspace state shared by the plan evaluator and the kinematic twin.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skylane/geometry.hpp"

namespace skylane {

constexpr double kFeetPerFlightLevel = 100.0;

struct AircraftState {
    std::string callsign;
    Vec2 position;
    double altitude_ft = 0.0;
    double ground_speed_kt = 0.0;
    double vertical_rate_fpm = 0.0;
    std::string route_id;
    LaneSide lane = LaneSide::Centre;
    double s = 0.0;  // along-track NM on the assigned lane
    double track_deg = 0.0;  // degrees clockwise from +y (north)

    // Commanded values that the kinematics steer towards.
    double target_altitude_ft = 0.0;
    double commanded_speed_kt = 0.0;
};

// Sorted-by-callsign view of every aircraft currently in the sector.
struct AirspaceSnapshot {
    double time = 0.0;
    std::vector<AircraftState> aircraft;
    std::vector<std::string> departed;  // sorted

    const AircraftState* find(const std::string& callsign) const;
    AircraftState* find(const std::string& callsign);
    bool has_departed(const std::string& callsign) const;
    void insert(AircraftState st);
    void remove(const std::string& callsign);
};

// Relative along-track ordering of each aircraft pair, used for the
// AircraftPassedLaterally predicate. The sign is measured along the lane of the
// reference aircraft (the slower one at first observation). The predicate also
// needs the along-track gap on that lane to reach the lateral minimum.
struct PairRecord {
    std::string reference;
    int initial_sign = 0;
    bool passed = false;
    bool operator==(const PairRecord&) const = default;
};

class PairHistory {
public:
    using Key = std::pair<std::string, std::string>;

    static Key key(const std::string& a, const std::string& b) { return a < b ? Key{a, b} : Key{b, a}; }

    const PairRecord* find(const std::string& a, const std::string& b) const;
    bool known(const std::string& callsign) const;

    // Observe every pair in the snapshot and latch sign changes.
    void observe(const AirspaceSnapshot& snap, const LaneNetwork& lanes);

    const std::map<Key, PairRecord>& records() const { return records_; }
    void set(const Key& k, PairRecord r) { records_[k] = std::move(r); }

    bool operator==(const PairHistory&) const = default;

private:
    std::map<Key, PairRecord> records_;
};

}  // namespace skylane
