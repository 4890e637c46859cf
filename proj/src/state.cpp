#include "skylane/state.hpp"

#include <algorithm>

namespace skylane {

namespace {
auto by_callsign = [](const AircraftState& a, const std::string& cs) { return a.callsign < cs; };
}

const AircraftState* AirspaceSnapshot::find(const std::string& callsign) const {
    auto it = std::lower_bound(aircraft.begin(), aircraft.end(), callsign, by_callsign);
    return (it != aircraft.end() && it->callsign == callsign) ? &*it : nullptr;
}

AircraftState* AirspaceSnapshot::find(const std::string& callsign) {
    auto it = std::lower_bound(aircraft.begin(), aircraft.end(), callsign, by_callsign);
    return (it != aircraft.end() && it->callsign == callsign) ? &*it : nullptr;
}

bool AirspaceSnapshot::has_departed(const std::string& callsign) const {
    return std::binary_search(departed.begin(), departed.end(), callsign);
}

void AirspaceSnapshot::insert(AircraftState st) {
    auto it = std::lower_bound(aircraft.begin(), aircraft.end(), st.callsign, by_callsign);
    if (it != aircraft.end() && it->callsign == st.callsign) {
        *it = std::move(st);
    } else {
        aircraft.insert(it, std::move(st));
    }
}

void AirspaceSnapshot::remove(const std::string& callsign) {
    auto it = std::lower_bound(aircraft.begin(), aircraft.end(), callsign, by_callsign);
    if (it == aircraft.end() || it->callsign != callsign) return;
    aircraft.erase(it);
    auto d = std::lower_bound(departed.begin(), departed.end(), callsign);
    if (d == departed.end() || *d != callsign) departed.insert(d, callsign);
}

const PairRecord* PairHistory::find(const std::string& a, const std::string& b) const {
    auto it = records_.find(key(a, b));
    return it == records_.end() ? nullptr : &it->second;
}

bool PairHistory::known(const std::string& callsign) const {
    for (const auto& [k, _] : records_) {
        if (k.first == callsign || k.second == callsign) return true;
    }
    return false;
}

namespace {
int sign_of(double v) { return v > 1e-9 ? 1 : (v < -1e-9 ? -1 : 0); }
}

void PairHistory::observe(const AirspaceSnapshot& snap, const LaneNetwork& lanes) {
    const auto& ac = snap.aircraft;
    for (std::size_t i = 0; i < ac.size(); ++i) {
        for (std::size_t j = i + 1; j < ac.size(); ++j) {
            auto [it, inserted] = records_.try_emplace(key(ac[i].callsign, ac[j].callsign));
            PairRecord& rec = it->second;
            if (inserted) {
                const bool i_slower = ac[i].commanded_speed_kt < ac[j].commanded_speed_kt ||
                                      (ac[i].commanded_speed_kt == ac[j].commanded_speed_kt);
                rec.reference = i_slower ? ac[i].callsign : ac[j].callsign;
            }
            if (rec.passed) continue;
            const AircraftState& ref = rec.reference == ac[i].callsign ? ac[i] : ac[j];
            const AircraftState& other = rec.reference == ac[i].callsign ? ac[j] : ac[i];
            const Lane& lane = lanes.lane(ref.route_id, ref.lane);
            const int sg = sign_of(along_track(lane, other.position).s - ref.s);
            if (sg == 0) continue;
            if (rec.initial_sign == 0) {
                rec.initial_sign = sg;
            } else if (sg != rec.initial_sign) {
                rec.passed = true;
            }
        }
    }
}

}  // namespace skylane
