#pragma once

// Pairwise separation checks, closest point of approach, conflict taxonomy and
// the time-ordered safety record compiled from a rollout ensemble.

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "skylane/state.hpp"
#include "skylane/twin.hpp"

namespace skylane {

struct SeparationMinima {
    double lateral_nm = 5.0;
    double vertical_ft = 1000.0;
};

struct ClassThresholds {
    double level_rate_fpm = 100.0;   // |rate| at or below this counts as level
    double parallel_max_deg = 45.0;  // track difference at or below: parallel
    double head_on_min_deg = 135.0;  // at or above: head-on
    double similar_speed_kt = 20.0;
};

enum class VerticalClass { LL, LA, LD, AD };
enum class LateralClass { HO, CR, P };
enum class SpeedClass { Similar, AC1Faster, AC2Faster };

const char* to_string(VerticalClass v);
const char* to_string(LateralClass l);
const char* to_string(SpeedClass s);

struct ConflictClass {
    VerticalClass vertical = VerticalClass::LL;
    LateralClass lateral = LateralClass::HO;
    SpeedClass speed = SpeedClass::Similar;

    // "LL/HO/Similar"
    std::string label() const;
    // Dense index in [0, 36).
    int index() const;
    static ConflictClass from_index(int i);
    static ConflictClass parse(const std::string& label);
    static std::array<ConflictClass, 36> all();

    auto operator<=>(const ConflictClass&) const = default;
};

struct Cpa {
    double t = 0.0;
    double distance_nm = 0.0;
    double vertical_ft = 0.0;
};

struct ConflictRecord {
    std::string ac1;  // lexicographically smaller callsign
    std::string ac2;
    double t_first = 0.0;
    double t_last = 0.0;
    Cpa cpa;
    ConflictClass cls;
    RolloutSource source;
    // Causal planned-action ids per callsign, filled in by the resolver.
    std::map<std::string, std::vector<std::string>> causal;
};

struct TechnicalSafetyRecord {
    int revision = 0;
    std::vector<ConflictRecord> records;  // ascending by (t_first, pair, source)

    bool empty() const { return records.empty(); }
};

bool check_separation(const AircraftState& a, const AircraftState& b, const SeparationMinima& minima);
bool check_separation(const Sample& a, const Sample& b, const SeparationMinima& minima);

// Closest point of approach over the time overlap of two trajectories. With a
// window, the argmin is taken only over samples inside [window.first,
// window.second]. Otherwise, the argmin is taken inside the first violation
// interval, or over the whole overlap if there is none. Ties go to the
// earliest sample. Throws std::invalid_argument on disjoint time ranges.
Cpa compute_cpa(const Trajectory& a, const Trajectory& b, const SeparationMinima& minima,
                std::optional<std::pair<double, double>> window = std::nullopt);

// Class of the encounter as seen with `ac1` as aircraft 1.
ConflictClass classify(const Sample& ac1, const Sample& ac2, const ClassThresholds& th = {});

// Absolute track difference folded into [0, 180] degrees.
double track_difference_deg(double a, double b);

bool record_less(const ConflictRecord& a, const ConflictRecord& b);

// Scans every rollout, pair and sample; runs (rollout, pair) scans in parallel.
TechnicalSafetyRecord detect(const RolloutSet& rollouts, const SeparationMinima& minima,
                             const ClassThresholds& th = {});
TechnicalSafetyRecord detect_serial(const RolloutSet& rollouts, const SeparationMinima& minima,
                                    const ClassThresholds& th = {});
// Records for a single pair of trajectories from one rollout.
std::vector<ConflictRecord> detect_pair(const Trajectory& a, const Trajectory& b, const RolloutSource& source,
                                        const SeparationMinima& minima, const ClassThresholds& th = {});

class EmptyRecordError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Throws EmptyRecordError on an empty record.
const ConflictRecord& earliest_conflict(const TechnicalSafetyRecord& tsr);

}  // namespace skylane
