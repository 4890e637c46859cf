#pragma once

// Scenario ingestion, the plan / verify / resolve / issue cycle against a
// perturbed ground-truth twin, clearance bookkeeping, the event log and the
// metrics derived from it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "skylane/json_io.hpp"
#include "skylane/resolver.hpp"

namespace skylane {

inline constexpr const char* kScenarioSchema = "skylane.scenario/1";
inline constexpr const char* kEventSchema = "skylane.events/1";
inline constexpr const char* kMetricsSchema = "skylane.metrics/1";

// Parse, schema or reference error; `location` is a JSON pointer.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string location, const std::string& message)
        : std::runtime_error(location.empty() ? message : location + ": " + message), location_(std::move(location)) {}
    const std::string& location() const { return location_; }

private:
    std::string location_;
};

struct AircraftSpec {
    std::string callsign;
    std::string route_id;
    double entry_time = 0.0;
    int entry_fl = 0;
    int pfl = 0;
    ExitCondition exit;
    double speed_kt = 450.0;
};

struct SimSettings {
    double dt_s = 5.0;
    double horizon_s = 3600.0;     // episode length
    double cadence_s = 10.0;       // replanning cycle
    double lookahead_s = 900.0;    // entrants planned this far ahead
    double prediction_s = 3600.0;  // ensemble horizon
    double cf_duration_s = 900.0;
    double cf_interval_s = 300.0;
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 1;
    std::vector<Vec2> boundary;
    int floor_fl = 0;
    int ceiling_fl = 600;
    std::vector<Fix> fixes;
    std::vector<Route> routes;
    double lane_offset_nm = 3.5;
    std::vector<AircraftSpec> aircraft;
    int rollouts = 20;
    PerturbationSpec perturbation;
    PerformanceParams performance;
    SeparationMinima minima;
    SearchParams search;
    StrategyParams strategy;
    SimSettings sim;
};

Scenario parse_scenario(const Json& doc);
Scenario load_scenario(const std::filesystem::path& path);
Json scenario_to_json(const Scenario& sc);

// Shape check only; `location` prefixes error pointers.
AircraftSpec parse_aircraft(const Json& j, const std::string& location);
Json aircraft_to_json(const AircraftSpec& a);

// Throws ScenarioError if the aircraft does not fit the scenario's routes.
void validate_aircraft(const Scenario& sc, const AircraftSpec& ac, const std::string& location);

ResolverConfig resolver_config(const Scenario& sc, bool parallel = true);
TwinConfig twin_config(const Scenario& sc);

// Append-only JSON-lines log. Every record carries `seq`, `t` and `type`;
// the content hash skips the `wall` member so wall-clock stamps do not
// affect it.
class EventLog {
public:
    // Returns the stored record. Throws std::logic_error if `t` goes backwards.
    const Json& append(std::string type, double t, Json body = Json::object());

    const std::vector<Json>& records() const { return records_; }
    bool empty() const { return records_.empty(); }
    std::uint64_t hash() const;
    std::string hash_hex() const;

    void write(const std::filesystem::path& path) const;
    static EventLog read(const std::filesystem::path& path);
    static EventLog from_records(std::vector<Json> records);

private:
    std::vector<Json> records_;
};

std::string hex64(std::uint64_t v);
// Current UTC time, ISO 8601 with milliseconds.
std::string wall_clock_now();

struct ExitDeviation {
    std::string callsign;
    double time_s = 0.0;    // actual minus planned crossing time of the exit fix
    double level_ft = 0.0;  // actual minus coordinated exit level
};

struct EpisodeMetrics {
    int violations = 0;     // executed separation violations (contiguous intervals)
    int interventions = 0;  // deconfliction manoeuvres initiated, per aircraft
    int clearances = 0;     // clearances issued
    int fallbacks = 0;
    int escalations = 0;
    int resolutions = 0;
    int expansions = 0;
    int simulations = 0;
    int missed_coordinations = 0;
    int replans = 0;
    int cycles = 0;
    double wall_ms_mean = 0.0;
    double wall_ms_max = 0.0;
    std::vector<ExitDeviation> exit_deviations;
    std::map<std::string, int> strategy_histogram;  // applied strategies by library id
    bool failure = false;                          // a fallback or escalation occurred
};

struct MetricsReport {
    EpisodeMetrics metrics;
    std::string text;
};

// Pure aggregation over the log.
MetricsReport emit_metrics(const EventLog& log);
Json metrics_to_json(const EpisodeMetrics& m);

enum class ClearanceStatus { Proposed, Approved, Issued, Completed, Missed, Rejected, Superseded };
const char* to_string(ClearanceStatus s);

struct Clearance {
    std::string id;
    std::string callsign;
    std::string action_id;
    std::string manoeuvre_id;
    std::string strategy;
    Action action;
    Condition trigger;
    ClearanceStatus status = ClearanceStatus::Proposed;
    double proposed_time = 0.0;
    std::optional<double> issued_time;
    bool initiates = false;  // first issued clearance of a deconfliction manoeuvre
};

Json clearance_to_json(const Clearance& c);

struct EpisodeOptions {
    bool auto_approve = true;
    // Proposed clearances are approved after this long when set.
    std::optional<double> auto_approve_timeout_s;
    bool parallel = true;
    // Predicted samples per aircraft in each timeline frame.
    double frame_stride_s = 60.0;
    double frame_span_s = 900.0;
};

// Outcome of a console command.
struct CommandResult {
    enum class Code { Ok, NotFound, Conflict, Invalid };
    Code code = Code::Ok;
    std::string message;
    bool ok() const { return code == Code::Ok; }
};

// One episode. The owner drives it cycle by cycle and may issue console
// commands between cycles.
class Episode {
public:
    explicit Episode(Scenario sc, EpisodeOptions opts = {});
    Episode(const Episode&) = delete;
    Episode& operator=(const Episode&) = delete;

    bool finished() const;
    double time() const { return world_.time(); }
    void run_cycle();
    void run();

    CommandResult approve(const std::string& clearance_id, const std::string& wall = {});
    CommandResult modify(const std::string& clearance_id, const Action& replacement, const std::string& wall = {});
    CommandResult reject(const std::string& clearance_id, const std::string& wall = {});
    CommandResult inject(const AircraftSpec& spec, const std::string& wall = {});
    // Records a console command that has no effect on the episode state.
    void note_console(const std::string& command, const Json& args, const std::string& wall = {});

    const Scenario& scenario() const { return scenario_; }
    const EpisodeOptions& options() const { return opts_; }
    const EventLog& log() const { return log_; }
    const World& ground_truth() const { return world_; }
    const LaneNetwork& lanes() const { return *lanes_; }
    const std::vector<Clearance>& clearances() const { return clearances_; }
    const std::map<std::string, Trajectory>& executed() const { return executed_; }
    const std::vector<Json>& frames() const { return frames_; }
    const TechnicalSafetyRecord& last_tsr() const { return last_tsr_; }
    bool fallback_occurred() const { return fallback_occurred_; }
    int exit_code() const { return fallback_occurred_ ? 2 : 0; }

    // Gateway snapshot payload.
    Json snapshot(const std::string& status = "running") const;

private:
    void release_constraints_now();
    void plan_new_aircraft();
    TechnicalSafetyRecord verify(RolloutSet& rollouts);
    bool check_coordination(const RolloutSet& rollouts);
    void resolve_now(double t, TechnicalSafetyRecord& tsr, RolloutSet& rollouts);
    void advance();
    void after_step(const StepReport& report);
    void record_frame(const RolloutSet& rollouts, const TechnicalSafetyRecord& tsr);
    void supersede_missing();
    void log_violations();
    bool gate(const std::string& callsign, const PlannedAction& pa, double t);
    Clearance* find_clearance(const std::string& id);
    void log_clearance(const Clearance& c, double t, Json extra = Json::object());
    void replan_aircraft(const std::string& callsign, const std::string& reason);
    double planned_exit_time(const AircraftSpec& spec) const;

    Scenario scenario_;
    EpisodeOptions opts_;
    std::unique_ptr<LaneNetwork> lanes_;
    TwinConfig twin_;
    std::unique_ptr<Resolver> resolver_;
    World world_;
    EventLog log_;
    std::vector<AircraftSpec> roster_;
    std::set<std::string> planned_;
    std::vector<Clearance> clearances_;
    std::map<std::string, std::size_t> clearance_by_action_;  // "callsign/action" -> index
    std::set<std::string> initiated_;                          // "callsign/manoeuvre" issued at least once
    std::map<std::string, std::size_t> firing_cursor_;
    std::map<std::string, Trajectory> executed_;
    std::set<std::string> exit_recorded_;
    std::set<std::string> coordination_missed_;
    std::vector<Json> frames_;
    std::vector<Json> alerts_;
    TechnicalSafetyRecord last_tsr_;
    int clearance_serial_ = 0;
    bool fallback_occurred_ = false;
    bool closed_ = false;
};

struct EpisodeResult {
    EventLog log;
    EpisodeMetrics metrics;
    std::string report;
    int exit_code = 0;
    std::vector<Trajectory> executed;
};

// Headless run to completion.
EpisodeResult run_episode(const Scenario& sc, const EpisodeOptions& opts = {});

// Re-runs a logged episode from its header, re-applying logged console
// commands at their simulated times.
struct ReplayResult {
    std::string logged_hash;
    std::string replayed_hash;
    bool match = false;
    EpisodeResult episode;
};
ReplayResult replay(const EventLog& log);

// Separation violations in executed trajectories, re-scanned pairwise.
std::vector<ConflictRecord> executed_violations(const std::vector<Trajectory>& executed, const SeparationMinima& minima);

}  // namespace skylane
