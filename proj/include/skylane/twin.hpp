#pragma once

// Kinematic digital twin: executes condition-gated plans over a lane network,
// runs perturbed ensembles and loss-of-communication counterfactuals.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skylane/geometry.hpp"
#include "skylane/plans.hpp"
#include "skylane/state.hpp"

namespace skylane {

struct TwinConfig {
    double dt_s = 5.0;
    double entry_lookahead_s = 900.0;
    double min_speed_kt = 250.0;
    double max_speed_kt = 600.0;
    double floor_ft = 0.0;
    double ceiling_ft = 60000.0;
    double lateral_minimum_nm = 5.0;
    PerformanceParams perf;
};

struct AircraftPerturbation {
    double speed_factor = 1.0;
    double pilot_delay_s = 0.0;
    bool operator==(const AircraftPerturbation&) const = default;
};

struct PerturbationSpec {
    double speed_spread = 0.05;     // factor drawn from [1 - spread, 1 + spread]
    double max_pilot_delay_s = 30.0;  // delay drawn from [0, max]
};

// One draw per aircraft for a whole rollout. Aircraft without an entry use
// the unperturbed defaults.
struct Perturbation {
    int scenario_index = 0;
    std::map<std::string, AircraftPerturbation> per_aircraft;

    AircraftPerturbation of(const std::string& callsign) const;
};

// Deterministic in (seed, scenario_index, callsign). Factors are clamped to
// [0.90, 1.10] and delays to [0, 60] s.
Perturbation draw_perturbation(std::uint64_t seed, int scenario_index, const std::vector<std::string>& callsigns,
                               const PerturbationSpec& spec);

// Aircraft scheduled to enter at the start of its route's centre lane.
struct ScheduledEntrant {
    std::string callsign;
    std::string route_id;
    double entry_time = 0.0;
    double altitude_ft = 0.0;
    double speed_kt = 480.0;
};

struct PendingEffect {
    std::string action_id;
    Action action;
    double apply_time = 0.0;
};

struct AircraftRuntime {
    AircraftPerturbation perturbation;
    std::vector<PendingEffect> pending;
};

enum class FiringKind { Activated, EffectApplied, Completed };
const char* to_string(FiringKind k);

struct FiringEvent {
    double time = 0.0;
    std::string action_id;
    FiringKind kind = FiringKind::Activated;
    bool operator==(const FiringEvent&) const = default;
};

struct Sample {
    double t = 0.0;
    Vec2 position;
    double altitude_ft = 0.0;
    double ground_speed_kt = 0.0;
    double vertical_rate_fpm = 0.0;
    double track_deg = 0.0;
    double s = 0.0;
    LaneSide lane = LaneSide::Centre;
    bool operator==(const Sample&) const = default;
};

struct Trajectory {
    std::string callsign;
    std::string route_id;
    std::vector<Sample> samples;  // strictly increasing t, constant step
    std::vector<FiringEvent> firings;
    std::optional<double> exit_time;

    // Sample at exactly time t (within 1e-6), or nullptr.
    const Sample* at(double t) const;
};

struct IssuedClearance {
    double time = 0.0;
    std::string callsign;
    std::string action_id;
    Action action;
};

// Consulted before a non-trivial action is activated; returning false keeps
// the action pending (e.g. awaiting operator approval).
using IssuanceGate = std::function<bool(const std::string& callsign, const PlannedAction& action, double t)>;

struct StepOptions {
    // Triggers may fire only while t <= cutoff (counterfactual rollouts).
    std::optional<double> trigger_cutoff;
    const IssuanceGate* gate = nullptr;
};

struct StepReport {
    std::vector<IssuedClearance> issued;
    std::vector<std::string> entered;
    std::vector<std::string> departed;
};

// Complete simulation state; copying a World forks the simulation.
class World {
public:
    AirspaceSnapshot snapshot;
    PairHistory history;
    AirspacePlan plan;
    std::map<std::string, AircraftRuntime> runtime;
    std::vector<ScheduledEntrant> entrants;  // not yet injected, sorted by (time, callsign)

    double time() const { return snapshot.time; }

    void schedule(ScheduledEntrant e);
    // Places an aircraft in the sector now.
    void inject(const ScheduledEntrant& e, const LaneNetwork& lanes, const TwinConfig& cfg);
    // Replaces the plan; pending effects of actions that no longer exist are dropped.
    void adopt(AirspacePlan next);
    // Assigns per-aircraft perturbations and refreshes ground speeds.
    void apply_perturbation(const Perturbation& p, const TwinConfig& cfg);
    // Sector empty and nobody left to enter.
    bool finished() const { return snapshot.aircraft.empty() && entrants.empty(); }

    // One step of length dt. When `recorder` is given, samples at the current
    // time and firing events are appended to it.
    StepReport step(const LaneNetwork& lanes, const TwinConfig& cfg, const StepOptions& opts,
                    std::map<std::string, Trajectory>* recorder, double lookahead_limit);
};

struct SimulationResult {
    std::vector<Trajectory> trajectories;  // sorted by callsign
    std::vector<World> captures;           // worlds at the requested capture times
    World final_world;
};

struct SimulateOptions {
    StepOptions step;
    std::vector<double> capture_times;  // ascending; captured before the step at that time
    // Entrants later than start + lookahead are not injected (config value if unset).
    std::optional<double> entry_lookahead_s;
};

// Runs repeated steps for `duration_s` (stops early once the world is
// finished). Samples are recorded at every step time in [start, start + duration].
SimulationResult simulate(World world, const LaneNetwork& lanes, const TwinConfig& cfg, double duration_s,
                          const SimulateOptions& opts = {});

// Loss-of-communication rollout: nothing new fires after the cut time
// (inclusive), already-active actions run to completion.
std::vector<Trajectory> rollout_counterfactual(const World& at_cut, const LaneNetwork& lanes, const TwinConfig& cfg,
                                               double duration_s = 900.0);

struct RolloutSource {
    enum class Kind { Nominal, Perturbed, Counterfactual };
    Kind kind = Kind::Nominal;
    int index = 0;         // perturbed scenario index (1-based)
    double cut_time = 0.0;  // counterfactual cut

    std::string label() const;
    bool operator==(const RolloutSource&) const = default;
};
bool operator<(const RolloutSource& a, const RolloutSource& b);

struct Rollout {
    RolloutSource source;
    std::vector<Trajectory> trajectories;  // sorted by callsign
};

struct RolloutSet {
    int revision = 0;
    Rollout nominal;
    std::vector<Rollout> perturbed;
    std::vector<Rollout> counterfactuals;

    std::vector<const Rollout*> all() const;
};

struct EnsembleConfig {
    int perturbed_count = 20;
    PerturbationSpec spec;
    std::uint64_t seed = 1;
    double horizon_s = 3600.0;
    double cf_duration_s = 900.0;
    double cf_interval_s = 300.0;
    bool counterfactuals = true;
};

// Cut times: world time, then every interval inside the horizon.
std::vector<double> counterfactual_cut_times(double start, const EnsembleConfig& cfg);

// Nominal run (no perturbation) plus N perturbed runs plus a counterfactual
// at every cut time. Perturbed and counterfactual runs execute in parallel.
RolloutSet simulate_ensemble(const World& world, const LaneNetwork& lanes, const TwinConfig& cfg,
                             const EnsembleConfig& ens);
// Single-threaded reference of simulate_ensemble.
RolloutSet simulate_ensemble_serial(const World& world, const LaneNetwork& lanes, const TwinConfig& cfg,
                                    const EnsembleConfig& ens);

// FNV-1a content hash over every sample and firing event.
std::uint64_t fingerprint(const RolloutSet& set);
std::uint64_t fingerprint(const std::vector<Trajectory>& trajectories);

}  // namespace skylane
