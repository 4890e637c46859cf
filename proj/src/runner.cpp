#include "skylane/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include "skylane/hash.hpp"

namespace skylane {

namespace {

constexpr double kEps = 1e-9;
// Predicted exit-level error beyond which coordination counts as missed.
constexpr double kCoordinationToleranceFt = 300.0;

[[noreturn]] void fail(const std::string& loc, const std::string& msg) { throw ScenarioError(loc, msg); }

const Json& require(const Json& obj, const std::string& key, const std::string& loc) {
    if (!obj.is_object()) fail(loc, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(loc + "/" + key, "missing required field");
    return *it;
}

double as_number(const Json& j, const std::string& loc) {
    if (!j.is_number()) fail(loc, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(loc, "expected a finite number");
    return v;
}

int as_int(const Json& j, const std::string& loc) {
    if (!j.is_number_integer()) fail(loc, "expected an integer");
    return j.get<int>();
}

std::string as_text(const Json& j, const std::string& loc) {
    if (!j.is_string()) fail(loc, "expected a string");
    return j.get<std::string>();
}

double opt_number(const Json& obj, const std::string& key, const std::string& loc, double fallback) {
    if (!obj.contains(key)) return fallback;
    return as_number(obj.at(key), loc + "/" + key);
}

int opt_int(const Json& obj, const std::string& key, const std::string& loc, int fallback) {
    if (!obj.contains(key)) return fallback;
    return as_int(obj.at(key), loc + "/" + key);
}

const Json& opt_object(const Json& doc, const std::string& key) {
    static const Json empty = Json::object();
    if (!doc.contains(key)) return empty;
    if (!doc.at(key).is_object()) fail("/" + key, "expected an object");
    return doc.at(key);
}

void require_positive(double v, const std::string& loc) {
    if (!(v > 0.0)) fail(loc, "must be positive");
}

double exit_fix_distance(const Route& route, int exit_idx) {
    double s = 0.0;
    for (int i = 1; i <= exit_idx; ++i) s += distance(route.fixes[i - 1].position, route.fixes[i].position);
    return s;
}

}  // namespace

void validate_aircraft(const Scenario& sc, const AircraftSpec& ac, const std::string& loc) {
    if (ac.callsign.empty()) fail(loc + "/callsign", "callsign must not be empty");
    auto rit = std::find_if(sc.routes.begin(), sc.routes.end(), [&](const Route& r) { return r.id == ac.route_id; });
    if (rit == sc.routes.end()) fail(loc + "/route", "unknown route '" + ac.route_id + "'");
    if (ac.entry_time < 0.0) fail(loc + "/entry_time", "entry time must be >= 0");
    const int idx = rit->fix_index(ac.exit.fix_id);
    if (idx < 0) fail(loc + "/exit/fix", "exit fix '" + ac.exit.fix_id + "' is not on route '" + ac.route_id + "'");
    if (idx == 0) fail(loc + "/exit/fix", "exit fix '" + ac.exit.fix_id + "' is the entry fix");
    if (ac.speed_kt < 250.0 || ac.speed_kt > 600.0) fail(loc + "/speed_kt", "speed must lie in [250, 600] kt");
    if (ac.entry_fl < sc.floor_fl || ac.entry_fl > sc.ceiling_fl) fail(loc + "/entry_fl", "entry level outside sector");
    if (ac.exit.level_fl < sc.floor_fl || ac.exit.level_fl > sc.ceiling_fl) fail(loc + "/exit/fl", "exit level outside sector");
}

AircraftSpec parse_aircraft(const Json& a, const std::string& loc) {
    AircraftSpec ac;
    ac.callsign = as_text(require(a, "callsign", loc), loc + "/callsign");
    ac.route_id = as_text(require(a, "route", loc), loc + "/route");
    ac.entry_time = opt_number(a, "entry_time", loc, 0.0);
    ac.entry_fl = as_int(require(a, "entry_fl", loc), loc + "/entry_fl");
    ac.pfl = opt_int(a, "pfl", loc, ac.entry_fl);
    const Json& ex = require(a, "exit", loc);
    ac.exit.fix_id = as_text(require(ex, "fix", loc + "/exit"), loc + "/exit/fix");
    ac.exit.level_fl = as_int(require(ex, "fl", loc + "/exit"), loc + "/exit/fl");
    ac.speed_kt = opt_number(a, "speed_kt", loc, ac.speed_kt);
    return ac;
}

Json aircraft_to_json(const AircraftSpec& a) {
    return Json{{"callsign", a.callsign},
                {"route", a.route_id},
                {"entry_time", a.entry_time},
                {"entry_fl", a.entry_fl},
                {"pfl", a.pfl},
                {"exit", {{"fix", a.exit.fix_id}, {"fl", a.exit.level_fl}}},
                {"speed_kt", a.speed_kt}};
}

Scenario parse_scenario(const Json& doc) {
    if (!doc.is_object()) fail("", "scenario must be a JSON object");
    const std::string schema = as_text(require(doc, "schema", ""), "/schema");
    if (schema != kScenarioSchema) fail("/schema", "unsupported schema '" + schema + "'");

    Scenario sc;
    if (doc.contains("name")) sc.name = as_text(doc.at("name"), "/name");
    if (doc.contains("seed")) {
        const auto& s = doc.at("seed");
        if (!s.is_number_unsigned()) fail("/seed", "expected a non-negative integer");
        sc.seed = s.get<std::uint64_t>();
    }

    const Json& sector = opt_object(doc, "sector");
    sc.floor_fl = opt_int(sector, "floor_fl", "/sector", sc.floor_fl);
    sc.ceiling_fl = opt_int(sector, "ceiling_fl", "/sector", sc.ceiling_fl);
    if (sc.floor_fl < 0 || sc.ceiling_fl <= sc.floor_fl) fail("/sector", "need 0 <= floor_fl < ceiling_fl");
    if (sector.contains("boundary")) {
        const auto& b = sector.at("boundary");
        if (!b.is_array()) fail("/sector/boundary", "expected an array of [x, y]");
        for (std::size_t i = 0; i < b.size(); ++i) {
            const std::string loc = "/sector/boundary/" + std::to_string(i);
            if (!b[i].is_array() || b[i].size() != 2) fail(loc, "expected [x, y]");
            sc.boundary.push_back({as_number(b[i][0], loc + "/0"), as_number(b[i][1], loc + "/1")});
        }
        if (!sc.boundary.empty() && sc.boundary.size() < 3) fail("/sector/boundary", "needs at least 3 vertices");
    }

    const Json& fixes = require(doc, "fixes", "");
    if (!fixes.is_array()) fail("/fixes", "expected an array");
    std::map<std::string, Vec2> fix_pos;
    for (std::size_t i = 0; i < fixes.size(); ++i) {
        const std::string loc = "/fixes/" + std::to_string(i);
        Fix f;
        f.id = as_text(require(fixes[i], "id", loc), loc + "/id");
        f.position = {as_number(require(fixes[i], "x", loc), loc + "/x"), as_number(require(fixes[i], "y", loc), loc + "/y")};
        if (!fix_pos.emplace(f.id, f.position).second) fail(loc + "/id", "duplicate fix '" + f.id + "'");
        sc.fixes.push_back(std::move(f));
    }

    const Json& routes = require(doc, "routes", "");
    if (!routes.is_array()) fail("/routes", "expected an array");
    for (std::size_t i = 0; i < routes.size(); ++i) {
        const std::string loc = "/routes/" + std::to_string(i);
        Route r;
        r.id = as_text(require(routes[i], "id", loc), loc + "/id");
        for (const auto& other : sc.routes)
            if (other.id == r.id) fail(loc + "/id", "duplicate route '" + r.id + "'");
        const Json& ids = require(routes[i], "fixes", loc);
        if (!ids.is_array()) fail(loc + "/fixes", "expected an array of fix ids");
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::string fid = as_text(ids[k], loc + "/fixes/" + std::to_string(k));
            auto it = fix_pos.find(fid);
            if (it == fix_pos.end()) fail(loc + "/fixes/" + std::to_string(k), "unknown fix '" + fid + "'");
            r.fixes.push_back({fid, it->second});
        }
        try {
            validate_route(r);
        } catch (const std::exception& e) {
            fail(loc, e.what());
        }
        sc.routes.push_back(std::move(r));
    }

    const Json& lanes = opt_object(doc, "lanes");
    sc.lane_offset_nm = opt_number(lanes, "offset_nm", "/lanes", sc.lane_offset_nm);
    require_positive(sc.lane_offset_nm, "/lanes/offset_nm");
    for (std::size_t i = 0; i < sc.routes.size(); ++i) {
        try {
            (void)build_lanes(sc.routes[i], sc.lane_offset_nm);
        } catch (const std::exception& e) {
            fail("/routes/" + std::to_string(i), e.what());
        }
    }

    const Json& pert = opt_object(doc, "perturbation");
    sc.rollouts = opt_int(pert, "rollouts", "/perturbation", sc.rollouts);
    if (sc.rollouts < 1) fail("/perturbation/rollouts", "must be >= 1");
    sc.perturbation.speed_spread = opt_number(pert, "speed_spread", "/perturbation", sc.perturbation.speed_spread);
    sc.perturbation.max_pilot_delay_s =
        opt_number(pert, "max_pilot_delay_s", "/perturbation", sc.perturbation.max_pilot_delay_s);
    if (sc.perturbation.speed_spread < 0.0) fail("/perturbation/speed_spread", "must be >= 0");
    if (sc.perturbation.max_pilot_delay_s < 0.0) fail("/perturbation/max_pilot_delay_s", "must be >= 0");

    const Json& perf = opt_object(doc, "performance");
    sc.performance.climb_rate_fpm = opt_number(perf, "climb_rate_fpm", "/performance", sc.performance.climb_rate_fpm);
    sc.performance.descent_rate_fpm =
        opt_number(perf, "descent_rate_fpm", "/performance", sc.performance.descent_rate_fpm);
    sc.performance.level_tolerance_ft =
        opt_number(perf, "level_tolerance_ft", "/performance", sc.performance.level_tolerance_ft);
    require_positive(sc.performance.climb_rate_fpm, "/performance/climb_rate_fpm");
    require_positive(sc.performance.descent_rate_fpm, "/performance/descent_rate_fpm");
    require_positive(sc.performance.level_tolerance_ft, "/performance/level_tolerance_ft");

    const Json& minima = opt_object(doc, "minima");
    sc.minima.lateral_nm = opt_number(minima, "lateral_nm", "/minima", sc.minima.lateral_nm);
    sc.minima.vertical_ft = opt_number(minima, "vertical_ft", "/minima", sc.minima.vertical_ft);
    require_positive(sc.minima.lateral_nm, "/minima/lateral_nm");
    require_positive(sc.minima.vertical_ft, "/minima/vertical_ft");

    const Json& search = opt_object(doc, "search");
    sc.search.d_max = opt_int(search, "d_max", "/search", sc.search.d_max);
    sc.search.branching_cap = opt_int(search, "branching_cap", "/search", sc.search.branching_cap);
    sc.search.node_budget = opt_int(search, "node_budget", "/search", sc.search.node_budget);
    if (sc.search.d_max < 1) fail("/search/d_max", "must be >= 1");
    if (sc.search.branching_cap < 1) fail("/search/branching_cap", "must be >= 1");
    if (sc.search.node_budget < 1) fail("/search/node_budget", "must be >= 1");

    const Json& strat = opt_object(doc, "strategy");
    if (strat.contains("lateral_resume")) {
        if (!strat.at("lateral_resume").is_boolean()) fail("/strategy/lateral_resume", "expected a boolean");
        sc.strategy.lateral_resume = strat.at("lateral_resume").get<bool>();
    }
    if (strat.contains("level_steps")) {
        const auto& steps = strat.at("level_steps");
        if (!steps.is_array() || steps.empty()) fail("/strategy/level_steps", "expected a non-empty array");
        sc.strategy.level_steps.clear();
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const int v = as_int(steps[i], "/strategy/level_steps/" + std::to_string(i));
            if (v < 1) fail("/strategy/level_steps/" + std::to_string(i), "must be >= 1");
            sc.strategy.level_steps.push_back(v);
        }
    }
    sc.strategy.trail_gap_nm = opt_number(strat, "trail_gap_nm", "/strategy", sc.strategy.trail_gap_nm);
    sc.strategy.trail_speed_delta_kt =
        opt_number(strat, "trail_speed_delta_kt", "/strategy", sc.strategy.trail_speed_delta_kt);

    const Json& sim = opt_object(doc, "sim");
    sc.sim.dt_s = opt_number(sim, "dt_s", "/sim", sc.sim.dt_s);
    sc.sim.horizon_s = opt_number(sim, "horizon_s", "/sim", sc.sim.horizon_s);
    sc.sim.cadence_s = opt_number(sim, "cadence_s", "/sim", sc.sim.cadence_s);
    sc.sim.lookahead_s = opt_number(sim, "lookahead_s", "/sim", sc.sim.lookahead_s);
    sc.sim.prediction_s = opt_number(sim, "prediction_s", "/sim", sc.sim.prediction_s);
    sc.sim.cf_duration_s = opt_number(sim, "cf_duration_s", "/sim", sc.sim.cf_duration_s);
    sc.sim.cf_interval_s = opt_number(sim, "cf_interval_s", "/sim", sc.sim.cf_interval_s);
    for (const char* key : {"dt_s", "horizon_s", "cadence_s", "lookahead_s", "prediction_s", "cf_duration_s", "cf_interval_s"}) {
        if (sim.contains(key)) require_positive(as_number(sim.at(key), std::string("/sim/") + key), std::string("/sim/") + key);
    }
    if (sc.sim.prediction_s > 3600.0 + kEps) fail("/sim/prediction_s", "must not exceed 3600 s");
    if (sc.sim.cf_duration_s > 3600.0 + kEps) fail("/sim/cf_duration_s", "must not exceed 3600 s");
    const double ratio = sc.sim.cadence_s / sc.sim.dt_s;
    if (ratio < 1.0 - kEps || std::abs(ratio - std::round(ratio)) > 1e-9) {
        fail("/sim/cadence_s", "cadence must be a positive multiple of dt");
    }

    const Json& aircraft = require(doc, "aircraft", "");
    if (!aircraft.is_array()) fail("/aircraft", "expected an array");
    std::set<std::string> callsigns;
    for (std::size_t i = 0; i < aircraft.size(); ++i) {
        const std::string loc = "/aircraft/" + std::to_string(i);
        AircraftSpec ac = parse_aircraft(aircraft[i], loc);
        if (!callsigns.insert(ac.callsign).second) fail(loc + "/callsign", "duplicate callsign '" + ac.callsign + "'");
        validate_aircraft(sc, ac, loc);
        sc.aircraft.push_back(std::move(ac));
    }
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("", "cannot open scenario file " + path.string());
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ScenarioError("", path.string() + ": " + e.what());
    }
    return parse_scenario(doc);
}

Json scenario_to_json(const Scenario& sc) {
    Json fixes = Json::array();
    for (const auto& f : sc.fixes) fixes.push_back({{"id", f.id}, {"x", f.position.x}, {"y", f.position.y}});
    Json routes = Json::array();
    for (const auto& r : sc.routes) {
        Json ids = Json::array();
        for (const auto& f : r.fixes) ids.push_back(f.id);
        routes.push_back({{"id", r.id}, {"fixes", ids}});
    }
    Json aircraft = Json::array();
    for (const auto& a : sc.aircraft) {
        aircraft.push_back(aircraft_to_json(a));
    }
    Json sector{{"floor_fl", sc.floor_fl}, {"ceiling_fl", sc.ceiling_fl}};
    if (!sc.boundary.empty()) sector["boundary"] = sc.boundary;
    return Json{{"schema", kScenarioSchema},
                {"name", sc.name},
                {"seed", sc.seed},
                {"sector", sector},
                {"fixes", fixes},
                {"routes", routes},
                {"lanes", {{"offset_nm", sc.lane_offset_nm}}},
                {"aircraft", aircraft},
                {"perturbation",
                 {{"rollouts", sc.rollouts},
                  {"speed_spread", sc.perturbation.speed_spread},
                  {"max_pilot_delay_s", sc.perturbation.max_pilot_delay_s}}},
                {"performance",
                 {{"climb_rate_fpm", sc.performance.climb_rate_fpm},
                  {"descent_rate_fpm", sc.performance.descent_rate_fpm},
                  {"level_tolerance_ft", sc.performance.level_tolerance_ft}}},
                {"minima", {{"lateral_nm", sc.minima.lateral_nm}, {"vertical_ft", sc.minima.vertical_ft}}},
                {"search",
                 {{"d_max", sc.search.d_max},
                  {"branching_cap", sc.search.branching_cap},
                  {"node_budget", sc.search.node_budget}}},
                {"strategy",
                 {{"lateral_resume", sc.strategy.lateral_resume},
                  {"level_steps", sc.strategy.level_steps},
                  {"trail_gap_nm", sc.strategy.trail_gap_nm},
                  {"trail_speed_delta_kt", sc.strategy.trail_speed_delta_kt}}},
                {"sim",
                 {{"dt_s", sc.sim.dt_s},
                  {"horizon_s", sc.sim.horizon_s},
                  {"cadence_s", sc.sim.cadence_s},
                  {"lookahead_s", sc.sim.lookahead_s},
                  {"prediction_s", sc.sim.prediction_s},
                  {"cf_duration_s", sc.sim.cf_duration_s},
                  {"cf_interval_s", sc.sim.cf_interval_s}}}};
}

TwinConfig twin_config(const Scenario& sc) {
    TwinConfig cfg;
    cfg.dt_s = sc.sim.dt_s;
    cfg.entry_lookahead_s = sc.sim.lookahead_s;
    cfg.floor_ft = sc.floor_fl * kFeetPerFlightLevel;
    cfg.ceiling_ft = sc.ceiling_fl * kFeetPerFlightLevel;
    cfg.lateral_minimum_nm = sc.minima.lateral_nm;
    cfg.perf = sc.performance;
    return cfg;
}

ResolverConfig resolver_config(const Scenario& sc, bool parallel) {
    ResolverConfig cfg;
    cfg.search = sc.search;
    cfg.strategy = sc.strategy;
    cfg.ensemble.perturbed_count = sc.rollouts;
    cfg.ensemble.spec = sc.perturbation;
    cfg.ensemble.seed = sc.seed;
    cfg.ensemble.horizon_s = sc.sim.prediction_s;
    cfg.ensemble.cf_duration_s = sc.sim.cf_duration_s;
    cfg.ensemble.cf_interval_s = sc.sim.cf_interval_s;
    cfg.minima = sc.minima;
    cfg.twin = twin_config(sc);
    cfg.parallel = parallel;
    return cfg;
}

// ---------------------------------------------------------------------------
// Event log

const Json& EventLog::append(std::string type, double t, Json body) {
    if (!records_.empty() && t < records_.back().at("t").get<double>() - kEps) {
        throw std::logic_error("event log: timestamp " + std::to_string(t) + " precedes the previous record");
    }
    if (!body.is_object()) body = Json{{"data", std::move(body)}};
    body["seq"] = records_.size();
    body["t"] = t;
    body["type"] = std::move(type);
    records_.push_back(std::move(body));
    return records_.back();
}

std::uint64_t EventLog::hash() const {
    Fnv1a h;
    for (const auto& rec : records_) {
        if (rec.contains("wall")) {
            Json copy = rec;
            copy.erase("wall");
            h.text(copy.dump());
        } else {
            h.text(rec.dump());
        }
    }
    return h.value();
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string EventLog::hash_hex() const { return hex64(hash()); }

void EventLog::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& rec : records_) out << rec.dump() << '\n';
}

EventLog EventLog::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open log " + path.string());
    std::vector<Json> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(Json::parse(line));
        } catch (const Json::parse_error& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return from_records(std::move(records));
}

EventLog EventLog::from_records(std::vector<Json> records) {
    EventLog log;
    for (auto& r : records) {
        if (!r.is_object() || !r.contains("t") || !r.contains("type")) {
            throw std::runtime_error("event log: record without t/type");
        }
        if (!log.records_.empty() && r.at("t").get<double>() < log.records_.back().at("t").get<double>() - kEps) {
            throw std::runtime_error("event log: timestamps are not monotone");
        }
        log.records_.push_back(std::move(r));
    }
    return log;
}

std::string wall_clock_now() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

// ---------------------------------------------------------------------------
// Metrics

MetricsReport emit_metrics(const EventLog& log) {
    EpisodeMetrics m;
    double wall_total = 0.0;
    int wall_count = 0;
    for (const auto& rec : log.records()) {
        const std::string type = rec.at("type").get<std::string>();
        if (type == "violation") {
            ++m.violations;
        } else if (type == "clearance") {
            if (rec.value("status", std::string()) == "Issued") {
                ++m.clearances;
                if (rec.value("initiates", false)) ++m.interventions;
            }
        } else if (type == "resolution") {
            ++m.resolutions;
            const auto& stats = rec.at("stats");
            m.expansions += stats.value("expansions", 0);
            m.simulations += stats.value("simulations", 0);
            const std::string outcome = rec.value("outcome", std::string());
            if (outcome == "fallback") {
                ++m.fallbacks;
                ++m.strategy_histogram["fallback"];
            } else if (outcome == "escalated") {
                ++m.escalations;
            }
            for (const auto& a : rec.value("applied", Json::array())) {
                ++m.strategy_histogram[a.at("strategy_id").get<std::string>()];
            }
        } else if (type == "coordination") {
            if (rec.value("event", std::string()) == "missed") ++m.missed_coordinations;
        } else if (type == "replan") {
            ++m.replans;
        } else if (type == "cycle") {
            ++m.cycles;
            if (rec.contains("wall") && rec.at("wall").contains("cycle_ms")) {
                const double ms = rec.at("wall").at("cycle_ms").get<double>();
                wall_total += ms;
                ++wall_count;
                m.wall_ms_max = std::max(m.wall_ms_max, ms);
            }
        } else if (type == "exit") {
            m.exit_deviations.push_back({rec.at("callsign").get<std::string>(), rec.at("time_deviation_s").get<double>(),
                                         rec.at("level_deviation_ft").get<double>()});
        }
    }
    if (wall_count > 0) m.wall_ms_mean = wall_total / wall_count;
    m.failure = m.fallbacks > 0 || m.escalations > 0;

    std::ostringstream os;
    char buf[160];
    os << "Episode report\n";
    if (!log.empty() && log.records().front().at("type") == "header") {
        const auto& h = log.records().front();
        os << "  scenario       " << h.at("scenario").value("name", std::string("(unnamed)")) << "\n";
        os << "  seed           " << h.value("seed", 0ULL) << "\n";
    }
    os << "  log hash       " << log.hash_hex() << "\n";
    os << "  cycles         " << m.cycles << "\n";
    os << "  violations     " << m.violations << "\n";
    os << "  interventions  " << m.interventions << "\n";
    os << "  clearances     " << m.clearances << "\n";
    os << "  resolutions    " << m.resolutions << "\n";
    os << "  fallbacks      " << m.fallbacks << "\n";
    os << "  escalations    " << m.escalations << "\n";
    os << "  expansions     " << m.expansions << "\n";
    os << "  simulations    " << m.simulations << "\n";
    os << "  missed coord.  " << m.missed_coordinations << "\n";
    os << "  replans        " << m.replans << "\n";
    std::snprintf(buf, sizeof buf, "  cycle wall ms  mean %.2f  max %.2f\n", m.wall_ms_mean, m.wall_ms_max);
    os << buf;
    os << "  result         " << (m.failure ? "FAILURE (fallback or escalation)" : "clean") << "\n";
    os << "Strategy selection\n";
    if (m.strategy_histogram.empty()) os << "  (none)\n";
    for (const auto& [id, n] : m.strategy_histogram) {
        std::snprintf(buf, sizeof buf, "  %-16s %4d  ", id.c_str(), n);
        os << buf << std::string(static_cast<std::size_t>(std::min(n, 60)), '#') << "\n";
    }
    os << "Exit deviations\n";
    if (m.exit_deviations.empty()) os << "  (none)\n";
    for (const auto& d : m.exit_deviations) {
        std::snprintf(buf, sizeof buf, "  %-10s time %+8.1f s  level %+7.0f ft\n", d.callsign.c_str(), d.time_s,
                      d.level_ft);
        os << buf;
    }
    return {std::move(m), os.str()};
}

Json metrics_to_json(const EpisodeMetrics& m) {
    Json exits = Json::array();
    for (const auto& d : m.exit_deviations) {
        exits.push_back({{"callsign", d.callsign}, {"time_s", d.time_s}, {"level_ft", d.level_ft}});
    }
    return Json{{"schema", kMetricsSchema},
                {"violations", m.violations},
                {"interventions", m.interventions},
                {"clearances", m.clearances},
                {"fallbacks", m.fallbacks},
                {"escalations", m.escalations},
                {"resolutions", m.resolutions},
                {"node_expansions", m.expansions},
                {"simulations", m.simulations},
                {"missed_coordinations", m.missed_coordinations},
                {"replans", m.replans},
                {"cycles", m.cycles},
                {"wall_ms_per_cycle", {{"mean", m.wall_ms_mean}, {"max", m.wall_ms_max}}},
                {"exit_deviations", exits},
                {"strategy_histogram", m.strategy_histogram},
                {"failure", m.failure}};
}

// ---------------------------------------------------------------------------
// Clearances

const char* to_string(ClearanceStatus s) {
    switch (s) {
    case ClearanceStatus::Proposed: return "Proposed";
    case ClearanceStatus::Approved: return "Approved";
    case ClearanceStatus::Issued: return "Issued";
    case ClearanceStatus::Completed: return "Completed";
    case ClearanceStatus::Missed: return "Missed";
    case ClearanceStatus::Rejected: return "Rejected";
    default: return "Superseded";
    }
}

Json clearance_to_json(const Clearance& c) {
    Json j{{"id", c.id},
           {"callsign", c.callsign},
           {"action_id", c.action_id},
           {"manoeuvre", c.manoeuvre_id},
           {"strategy", c.strategy},
           {"action", c.action},
           {"trigger", c.trigger},
           {"trigger_text", describe(c.trigger)},
           {"status", to_string(c.status)},
           {"proposed_time", c.proposed_time},
           {"initiates", c.initiates}};
    if (c.issued_time) j["issued_time"] = *c.issued_time;
    return j;
}

// ---------------------------------------------------------------------------
// Episode

namespace {

std::optional<Sample> exit_crossing(const Trajectory& tr, const LaneNetwork& lanes, const FlightPlan& fp) {
    const int idx = lanes.route(fp.route_id).fix_index(fp.exit.fix_id);
    if (idx < 0) return std::nullopt;
    for (const auto& s : tr.samples) {
        const Lane& lane = lanes.lane(fp.route_id, s.lane);
        if (s.s >= lane.vertex_s()[static_cast<std::size_t>(idx)] - 1e-6) return s;
    }
    return std::nullopt;
}

bool same_content(const std::vector<PlannedAction>& a, const std::vector<PlannedAction>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i].action == b[i].action) || !(a[i].trigger == b[i].trigger) || !(a[i].completion == b[i].completion))
            return false;
    }
    return true;
}

std::vector<PlannedAction> open_actions(const std::vector<PlannedAction>& chain) {
    std::vector<PlannedAction> out;
    for (const auto& pa : chain)
        if (pa.status != ActionStatus::Complete) out.push_back(pa);
    return out;
}

// Vertical actions taking the aircraft from its current state to the
// coordinated exit: the nominal profile when still feasible, otherwise an
// immediate level change.
std::vector<PlannedAction> path_to_exit(const FlightPlan& fp, const AircraftState& st, const LaneNetwork& lanes,
                                        const PerformanceParams& perf) {
    const Route& route = lanes.route(fp.route_id);
    const EntryState es{st.callsign, fp.route_id, st.altitude_ft, st.commanded_speed_kt,
                        along_track(lanes.lane(fp.route_id, LaneSide::Centre), st.position).s};
    try {
        return build_nominal_plan(es, route, std::max(fp.pfl, fp.exit.level_fl), fp.exit, perf).chain(Axis::Vertical);
    } catch (const PlanError&) {
    }
    const int exit_fl = fp.exit.level_fl;
    const double exit_ft = exit_fl * kFeetPerFlightLevel;
    std::vector<PlannedAction> out;
    PlannedAction pa;
    if (std::abs(st.altitude_ft - exit_ft) > perf.level_tolerance_ft) {
        pa.trigger = Condition::immediate();
        pa.action = st.altitude_ft < exit_ft ? Action::climb_to(exit_fl) : Action::descend_to(exit_fl);
        pa.completion = Condition::reached_level(exit_fl);
        out.push_back(pa);
        pa.trigger = Condition::reached_level(exit_fl);
    } else {
        pa.trigger = Condition::immediate();
    }
    pa.action = Action::maintain(exit_fl);
    pa.completion = Condition::at_fix(fp.exit.fix_id, 0.0);
    out.push_back(pa);
    return out;
}

// Assigns fresh ids under a new manoeuvre record.
void adopt_phases(FlightPlan& fp, std::vector<PlannedAction>& phases, const std::string& manoeuvre_id) {
    for (auto& pa : phases) {
        pa.id = fp.allocate_id("R");
        pa.status = ActionStatus::Pending;
        pa.manoeuvre_id = manoeuvre_id;
    }
}

std::vector<AxisFootprint> footprint_of(const std::string& callsign, const std::vector<PlannedAction>& phases,
                                        const AircraftState& st) {
    std::vector<AxisFootprint> out;
    for (const auto& pa : phases) {
        switch (pa.axis()) {
        case Axis::Lateral:
            if (pa.action.kind == Action::Kind::FlyLane)
                out.push_back({callsign, Axis::Lateral, lateral_direction(pa.action.side)});
            break;
        case Axis::Vertical:
            out.push_back({callsign, Axis::Vertical, vertical_direction(pa.action.level_fl, st.altitude_ft)});
            break;
        case Axis::Speed:
            out.push_back({callsign, Axis::Speed, speed_direction(pa.action.speed_kt, st.commanded_speed_kt)});
            break;
        }
    }
    std::erase_if(out, [](const AxisFootprint& f) { return f.direction == AxisDirection::None; });
    return out;
}

std::string strategy_of(const FlightPlan& fp, const std::string& manoeuvre_id) {
    for (const auto& m : fp.manoeuvres)
        if (m.id == manoeuvre_id) return m.strategy_id;
    return {};
}

Json plan_digest(const FlightPlan& fp) { return fp; }

}  // namespace

Episode::Episode(Scenario sc, EpisodeOptions opts)
    : scenario_(std::move(sc)),
      opts_(opts),
      lanes_(std::make_unique<LaneNetwork>(scenario_.routes, scenario_.lane_offset_nm)),
      twin_(twin_config(scenario_)),
      resolver_(std::make_unique<Resolver>(*lanes_, resolver_config(scenario_, opts_.parallel))) {
    roster_ = scenario_.aircraft;
    std::stable_sort(roster_.begin(), roster_.end(), [](const AircraftSpec& a, const AircraftSpec& b) {
        return a.entry_time != b.entry_time ? a.entry_time < b.entry_time : a.callsign < b.callsign;
    });
    std::vector<std::string> callsigns;
    for (const auto& a : roster_) {
        world_.schedule({a.callsign, a.route_id, a.entry_time, a.entry_fl * kFeetPerFlightLevel, a.speed_kt});
        callsigns.push_back(a.callsign);
    }
    // Ground truth: one extra draw outside the ensemble's index range.
    world_.apply_perturbation(draw_perturbation(scenario_.seed, -1, callsigns, scenario_.perturbation), twin_);

    Json config{{"auto_approve", opts_.auto_approve},
                {"frame_stride_s", opts_.frame_stride_s},
                {"frame_span_s", opts_.frame_span_s}};
    if (opts_.auto_approve_timeout_s) config["auto_approve_timeout_s"] = *opts_.auto_approve_timeout_s;
    log_.append("header", 0.0,
                {{"schema", kEventSchema},
                 {"scenario", scenario_to_json(scenario_)},
                 {"seed", scenario_.seed},
                 {"config", config},
                 {"wall", {{"started", wall_clock_now()}}}});
}

bool Episode::finished() const { return closed_; }

void Episode::run() {
    while (!finished()) run_cycle();
}

void Episode::run_cycle() {
    if (closed_) return;
    auto should_close = [&] { return world_.finished() || time() >= scenario_.sim.horizon_s - kEps; };
    if (should_close()) {
        log_violations();
        closed_ = true;
        log_.append("end", time(), {{"exit_code", exit_code()}, {"fallback", fallback_occurred_}});
        return;
    }
    const auto wall0 = std::chrono::steady_clock::now();
    const double t = time();
    const std::size_t first_seq = log_.records().size();

    release_constraints_now();
    plan_new_aircraft();
    RolloutSet rollouts;
    TechnicalSafetyRecord tsr = verify(rollouts);
    if (check_coordination(rollouts)) tsr = verify(rollouts);
    if (!tsr.empty()) resolve_now(t, tsr, rollouts);
    last_tsr_ = tsr;
    record_frame(rollouts, tsr);

    std::vector<std::size_t> trace_refs;
    for (std::size_t i = first_seq; i < log_.records().size(); ++i) {
        if (log_.records()[i].at("type") == "resolution") trace_refs.push_back(i);
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall0).count();
    log_.append("cycle", t,
                {{"revision", world_.plan.revision},
                 {"aircraft", world_.snapshot.aircraft.size()},
                 {"tsr_size", tsr.records.size()},
                 {"resolutions", trace_refs},
                 {"wall", {{"cycle_ms", ms}}}});
    advance();
}

void Episode::release_constraints_now() {
    auto& cons = world_.plan.constraints;
    auto kept = release_constraints(cons, world_.snapshot, world_.history, *lanes_, twin_.lateral_minimum_nm);
    if (kept.size() == cons.size()) return;
    std::vector<AxisConstraint> released;
    for (const auto& c : cons)
        if (std::find(kept.begin(), kept.end(), c) == kept.end()) released.push_back(c);
    cons = std::move(kept);
    log_.append("constraints", time(), {{"released", released}, {"in_force", cons}});
}

void Episode::plan_new_aircraft() {
    bool changed = false;
    const double t = time();
    for (const auto& spec : roster_) {
        if (planned_.count(spec.callsign) || spec.entry_time > t + scenario_.sim.lookahead_s + kEps) continue;
        const Route& route = lanes_->route(spec.route_id);
        const EntryState entry{spec.callsign, spec.route_id, spec.entry_fl * kFeetPerFlightLevel, spec.speed_kt, 0.0};
        FlightPlan fp;
        try {
            fp = build_nominal_plan(entry, route, spec.pfl, spec.exit, scenario_.performance);
        } catch (const PlanError& e) {
            fp = build_nominal_plan(entry, route, spec.entry_fl, {spec.exit.fix_id, spec.entry_fl}, scenario_.performance);
            fp.exit = spec.exit;
            fp.exit_abandoned = true;
            Json alert{{"level", "plan_error"}, {"message", e.what()}, {"callsigns", {spec.callsign}}};
            alerts_.push_back(alert);
            log_.append("alert", t, alert);
        }
        world_.plan.plans[spec.callsign] = fp;
        planned_.insert(spec.callsign);
        log_.append("plan", t, {{"callsign", spec.callsign}, {"reason", "nominal"}, {"plan", plan_digest(fp)}});
        changed = true;
    }
    if (changed) ++world_.plan.revision;
}

TechnicalSafetyRecord Episode::verify(RolloutSet& rollouts) {
    TechnicalSafetyRecord tsr = resolver_->simulate_and_detect(world_, world_.plan, &rollouts);
    log_.append("tsr", time(), {{"revision", tsr.revision}, {"records", tsr.records}});
    return tsr;
}

bool Episode::check_coordination(const RolloutSet& rollouts) {
    bool changed = false;
    for (const auto& tr : rollouts.nominal.trajectories) {
        const std::string& cs = tr.callsign;
        auto pit = world_.plan.plans.find(cs);
        const AircraftState* st = world_.snapshot.find(cs);
        if (pit == world_.plan.plans.end() || !st || pit->second.exit_abandoned || coordination_missed_.count(cs)) continue;
        FlightPlan& fp = pit->second;
        const auto crossing = exit_crossing(tr, *lanes_, fp);
        if (!crossing) continue;
        const double dev = crossing->altitude_ft - fp.exit.level_fl * kFeetPerFlightLevel;
        if (std::abs(dev) <= kCoordinationToleranceFt) continue;

        coordination_missed_.insert(cs);
        log_.append("coordination", time(),
                    {{"event", "missed"},
                     {"callsign", cs},
                     {"exit", {{"fix", fp.exit.fix_id}, {"fl", fp.exit.level_fl}}},
                     {"predicted_time", crossing->t},
                     {"predicted_deviation_ft", dev}});
        for (auto it = clearances_.rbegin(); it != clearances_.rend(); ++it) {
            if (it->callsign != cs || it->action.axis() != Axis::Vertical || it->action.level_fl != fp.exit.level_fl)
                continue;
            if (it->status == ClearanceStatus::Issued || it->status == ClearanceStatus::Completed) {
                it->status = ClearanceStatus::Missed;
                log_clearance(*it, time());
            }
            break;
        }

        auto fresh = path_to_exit(fp, *st, *lanes_, scenario_.performance);
        const auto open = open_actions(fp.chain(Axis::Vertical));
        // Re-issuing the level change already under way only adds another pilot delay.
        const bool under_way = !open.empty() && !fresh.empty() && open.front().status == ActionStatus::Active &&
                               open.front().action == fresh.front().action;
        if (under_way || same_content(open, fresh)) {
            log_.append("coordination", time(), {{"event", "unchanged"}, {"callsign", cs}});
            continue;
        }
        if (auto why = constraint_violation(footprint_of(cs, fresh, *st), world_.plan.constraints)) {
            log_.append("coordination", time(), {{"event", "blocked"}, {"callsign", cs}, {"reason", *why}});
            continue;
        }
        AirspacePlan next = world_.plan;
        FlightPlan& nfp = next.plans.at(cs);
        const std::string mid = nfp.allocate_id("X");
        nfp.manoeuvres.push_back({mid, "coordination", {{"exit_fl", std::to_string(fp.exit.level_fl)}}});
        adopt_phases(nfp, fresh, mid);
        auto& chain = nfp.chain(Axis::Vertical);
        std::erase_if(chain, [](const PlannedAction& pa) { return pa.status != ActionStatus::Complete; });
        chain.insert(chain.end(), fresh.begin(), fresh.end());
        ++next.revision;
        world_.adopt(std::move(next));
        supersede_missing();
        log_.append("replan", time(),
                    {{"callsign", cs}, {"reason", "coordination"}, {"plan", plan_digest(world_.plan.plans.at(cs))}});
        changed = true;
    }
    return changed;
}

void Episode::resolve_now(double t, TechnicalSafetyRecord& tsr, RolloutSet& rollouts) {
    const int from_revision = world_.plan.revision;
    Resolution res = resolver_->resolve(world_);
    Json applied = Json::array();
    for (std::size_t i = 1; i < res.trace.accepted_path.size(); ++i) {
        const TraceNode& n = res.trace.nodes[static_cast<std::size_t>(res.trace.accepted_path[i])];
        applied.push_back({{"strategy_id", to_string(n.strategy_id)},
                           {"label", n.strategy},
                           {"priority", strategy_priority(n.strategy_id)},
                           {"depth", n.depth}});
    }
    Json body{{"outcome", to_string(res.outcome)},
              {"from_revision", from_revision},
              {"to_revision", res.plan.revision},
              {"conflict", earliest_conflict(tsr)},
              {"applied", applied},
              {"depth", res.trace.depth()},
              {"trace", res.trace},
              {"stats", res.stats}};
    if (res.alert) body["alert"] = *res.alert;
    log_.append("resolution", t, body);
    if (res.alert) {
        Json alert = *res.alert;
        alerts_.push_back(alert);
        log_.append("alert", t, alert);
    }
    if (res.outcome == Resolution::Outcome::Escalated) return;
    if (res.outcome == Resolution::Outcome::Fallback) fallback_occurred_ = true;
    world_.adopt(std::move(res.plan));
    supersede_missing();
    log_.append("plan_revision", t, {{"plan", world_.plan}});
    tsr = verify(rollouts);
}

void Episode::supersede_missing() {
    for (auto& c : clearances_) {
        if (c.status != ClearanceStatus::Proposed && c.status != ClearanceStatus::Approved) continue;
        auto pit = world_.plan.plans.find(c.callsign);
        const PlannedAction* pa = pit == world_.plan.plans.end() ? nullptr : pit->second.find(c.action_id);
        if (pa && pa->status == ActionStatus::Pending) continue;
        c.status = ClearanceStatus::Superseded;
        log_clearance(c, time());
    }
}

void Episode::record_frame(const RolloutSet& rollouts, const TechnicalSafetyRecord& tsr) {
    const double t = time();
    Json frame{{"revision", world_.plan.revision}, {"aircraft", world_.snapshot.aircraft}};
    const double stride = opts_.frame_stride_s;
    const double span = opts_.frame_span_s;
    Json predictions = Json::object();
    for (const auto& tr : rollouts.nominal.trajectories) {
        Json nominal = Json::array();
        Json envelope = Json::array();
        for (double dt = 0.0; dt <= span + kEps; dt += stride) {
            const Sample* s = tr.at(t + dt);
            if (!s) continue;
            nominal.push_back({s->t, s->position.x, s->position.y, s->altitude_ft});
            double xmin = s->position.x, xmax = xmin, ymin = s->position.y, ymax = ymin;
            double amin = s->altitude_ft, amax = amin;
            for (const auto& r : rollouts.perturbed) {
                auto it = std::lower_bound(r.trajectories.begin(), r.trajectories.end(), tr.callsign,
                                           [](const Trajectory& x, const std::string& cs) { return x.callsign < cs; });
                if (it == r.trajectories.end() || it->callsign != tr.callsign) continue;
                const Sample* p = it->at(t + dt);
                if (!p) continue;
                xmin = std::min(xmin, p->position.x);
                xmax = std::max(xmax, p->position.x);
                ymin = std::min(ymin, p->position.y);
                ymax = std::max(ymax, p->position.y);
                amin = std::min(amin, p->altitude_ft);
                amax = std::max(amax, p->altitude_ft);
            }
            envelope.push_back({{"t", s->t}, {"x", {xmin, xmax}}, {"y", {ymin, ymax}}, {"alt", {amin, amax}}});
        }
        predictions[tr.callsign] = {{"nominal", nominal}, {"envelope", envelope}};
    }
    frame["predictions"] = predictions;

    Json conflicts = Json::array();
    for (const auto& rec : tsr.records) {
        Json marker = rec;
        for (const Rollout* r : rollouts.all()) {
            if (!(r->source == rec.source)) continue;
            const Sample* a = nullptr;
            const Sample* b = nullptr;
            for (const auto& tr : r->trajectories) {
                if (tr.callsign == rec.ac1) a = tr.at(rec.cpa.t);
                if (tr.callsign == rec.ac2) b = tr.at(rec.cpa.t);
            }
            if (a && b) {
                marker["x"] = 0.5 * (a->position.x + b->position.x);
                marker["y"] = 0.5 * (a->position.y + b->position.y);
            }
            break;
        }
        conflicts.push_back(std::move(marker));
    }
    frame["conflicts"] = conflicts;
    frames_.push_back(log_.append("frame", t, frame));
}

void Episode::advance() {
    const auto steps = static_cast<int>(std::lround(scenario_.sim.cadence_s / scenario_.sim.dt_s));
    const IssuanceGate g = [this](const std::string& cs, const PlannedAction& pa, double t) { return gate(cs, pa, t); };
    StepOptions so;
    so.gate = &g;
    for (int i = 0; i < steps; ++i) {
        if (world_.finished() || time() >= scenario_.sim.horizon_s - kEps) break;
        const StepReport report = world_.step(*lanes_, twin_, so, &executed_, std::numeric_limits<double>::infinity());
        after_step(report);
    }
}

void Episode::after_step(const StepReport& report) {
    const double t_end = time();
    const double t_start = t_end - twin_.dt_s;
    for (const auto& cs : report.entered) {
        const AircraftState* st = world_.snapshot.find(cs);
        Json body{{"callsign", cs}};
        if (st) body["state"] = *st;
        log_.append("entry", t_start, body);
    }

    for (auto& [cs, tr] : executed_) {
        std::size_t& cursor = firing_cursor_[cs];
        for (; cursor < tr.firings.size(); ++cursor) {
            const FiringEvent& f = tr.firings[cursor];
            if (f.kind != FiringKind::Completed) continue;
            auto it = clearance_by_action_.find(cs + "/" + f.action_id);
            if (it == clearance_by_action_.end()) continue;
            Clearance& c = clearances_[it->second];
            if (c.status != ClearanceStatus::Issued) continue;
            c.status = ClearanceStatus::Completed;
            log_clearance(c, std::max(f.time, log_.records().back().at("t").get<double>()));
        }
    }

    std::vector<std::pair<double, Json>> exits;
    for (const auto& [cs, tr] : executed_) {
        if (exit_recorded_.count(cs) || tr.samples.empty()) continue;
        auto pit = world_.plan.plans.find(cs);
        if (pit == world_.plan.plans.end()) continue;
        const FlightPlan& fp = pit->second;
        const Trajectory last{cs, tr.route_id, {tr.samples.back()}, {}, {}};
        const auto crossing = exit_crossing(last, *lanes_, fp);
        if (!crossing) continue;
        exit_recorded_.insert(cs);
        auto spec = std::find_if(roster_.begin(), roster_.end(), [&](const AircraftSpec& a) { return a.callsign == cs; });
        const double planned = spec != roster_.end() ? planned_exit_time(*spec) : crossing->t;
        exits.emplace_back(crossing->t, Json{{"callsign", cs},
                                             {"fix", fp.exit.fix_id},
                                             {"fl", fp.exit.level_fl},
                                             {"altitude_ft", crossing->altitude_ft},
                                             {"planned_time", planned},
                                             {"time_deviation_s", crossing->t - planned},
                                             {"level_deviation_ft",
                                              crossing->altitude_ft - fp.exit.level_fl * kFeetPerFlightLevel},
                                             {"exit_abandoned", fp.exit_abandoned}});
    }
    std::stable_sort(exits.begin(), exits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [t, body] : exits) log_.append("exit", std::max(t, log_.records().back().at("t").get<double>()), body);

    for (const auto& cs : report.departed) log_.append("departure", t_end, {{"callsign", cs}});
}

double Episode::planned_exit_time(const AircraftSpec& spec) const {
    const Route& route = lanes_->route(spec.route_id);
    return spec.entry_time + exit_fix_distance(route, route.fix_index(spec.exit.fix_id)) / spec.speed_kt * 3600.0;
}

void Episode::log_violations() {
    std::vector<Trajectory> trs;
    for (const auto& [_, tr] : executed_) trs.push_back(tr);
    for (const auto& v : executed_violations(trs, scenario_.minima)) log_.append("violation", time(), {{"record", v}});
}

bool Episode::gate(const std::string& callsign, const PlannedAction& pa, double t) {
    const std::string key = callsign + "/" + pa.id;
    auto it = clearance_by_action_.find(key);
    if (it == clearance_by_action_.end()) {
        Clearance c;
        char buf[16];
        std::snprintf(buf, sizeof buf, "C%04d", ++clearance_serial_);
        c.id = buf;
        c.callsign = callsign;
        c.action_id = pa.id;
        c.manoeuvre_id = pa.manoeuvre_id;
        c.strategy = strategy_of(world_.plan.plans.at(callsign), pa.manoeuvre_id);
        c.action = pa.action;
        c.trigger = pa.trigger;
        c.proposed_time = t;
        clearances_.push_back(c);
        it = clearance_by_action_.emplace(key, clearances_.size() - 1).first;
        log_clearance(clearances_.back(), t);
    }
    Clearance& c = clearances_[it->second];
    if (c.status == ClearanceStatus::Proposed &&
        (opts_.auto_approve || (opts_.auto_approve_timeout_s && t - c.proposed_time >= *opts_.auto_approve_timeout_s - kEps))) {
        c.status = ClearanceStatus::Approved;
        log_clearance(c, t, {{"by", "auto"}});
    }
    if (c.status != ClearanceStatus::Approved) return false;
    c.status = ClearanceStatus::Issued;
    c.issued_time = t;
    const std::string mkey = callsign + "/" + c.manoeuvre_id;
    if (c.strategy != "nominal" && !initiated_.count(mkey)) {
        c.initiates = true;
        initiated_.insert(mkey);
    }
    log_clearance(c, t);
    return true;
}

Clearance* Episode::find_clearance(const std::string& id) {
    for (auto& c : clearances_)
        if (c.id == id) return &c;
    return nullptr;
}

void Episode::log_clearance(const Clearance& c, double t, Json extra) {
    Json body = clearance_to_json(c);
    for (auto& [k, v] : extra.items()) body[k] = v;
    log_.append("clearance", t, body);
}

void Episode::note_console(const std::string& command, const Json& args, const std::string& wall) {
    log_.append("console", time(),
                {{"command", command}, {"args", args}, {"result", "ok"}, {"wall", wall.empty() ? wall_clock_now() : wall}});
}

namespace {

CommandResult console_result(EventLog& log, double t, const std::string& command, const Json& args,
                             const std::string& wall, CommandResult result) {
    const char* code = result.code == CommandResult::Code::Ok         ? "ok"
                       : result.code == CommandResult::Code::NotFound ? "not_found"
                       : result.code == CommandResult::Code::Conflict ? "conflict"
                                                                      : "invalid";
    Json body{{"command", command}, {"args", args}, {"result", code}, {"wall", wall.empty() ? wall_clock_now() : wall}};
    if (!result.message.empty()) body["message"] = result.message;
    log.append("console", t, body);
    return result;
}

}  // namespace

CommandResult Episode::approve(const std::string& id, const std::string& wall) {
    const Json args{{"id", id}};
    if (closed_) return console_result(log_, time(), "approve", args, wall, {CommandResult::Code::Conflict, "episode terminated"});
    Clearance* c = find_clearance(id);
    if (!c) return console_result(log_, time(), "approve", args, wall, {CommandResult::Code::NotFound, "unknown clearance " + id});
    if (c->status != ClearanceStatus::Proposed) {
        return console_result(log_, time(), "approve", args, wall,
                              {CommandResult::Code::Conflict, id + " is " + to_string(c->status)});
    }
    console_result(log_, time(), "approve", args, wall, {});
    c->status = ClearanceStatus::Approved;
    log_clearance(*c, time(), {{"by", "operator"}});
    return {};
}

CommandResult Episode::modify(const std::string& id, const Action& replacement, const std::string& wall) {
    const Json args{{"id", id}, {"action", replacement}};
    auto reply = [&](CommandResult r) { return console_result(log_, time(), "modify", args, wall, std::move(r)); };
    if (closed_) return reply({CommandResult::Code::Conflict, "episode terminated"});
    Clearance* c = find_clearance(id);
    if (!c) return reply({CommandResult::Code::NotFound, "unknown clearance " + id});
    if (c->status != ClearanceStatus::Proposed) return reply({CommandResult::Code::Conflict, id + " is " + to_string(c->status)});
    if (replacement.axis() != c->action.axis()) {
        return reply({CommandResult::Code::Invalid, std::string("replacement must act on the ") + to_string(c->action.axis()) +
                                                         " axis"});
    }
    FlightPlan& fp = world_.plan.plans.at(c->callsign);
    if (replacement.kind == Action::Kind::FlyLane && replacement.route_id != fp.route_id) {
        return reply({CommandResult::Code::Invalid, "lane must belong to route " + fp.route_id});
    }
    const AircraftState* st = world_.snapshot.find(c->callsign);
    if (st) {
        PlannedAction probe;
        probe.action = replacement;
        if (auto why = constraint_violation(footprint_of(c->callsign, {probe}, *st), world_.plan.constraints)) {
            return reply({CommandResult::Code::Conflict, "rejected: " + *why});
        }
    }
    PlannedAction* target = nullptr;
    for (auto& pa : fp.chain(c->action.axis()))
        if (pa.id == c->action_id) target = &pa;
    if (!target) return reply({CommandResult::Code::Conflict, id + " no longer belongs to the plan"});
    target->action = replacement;
    if ((replacement.kind == Action::Kind::ClimbTo || replacement.kind == Action::Kind::DescendTo) &&
        target->completion.kind == Condition::Kind::ReachedLevel) {
        target->completion = Condition::reached_level(replacement.level_fl);
    }
    ++world_.plan.revision;
    reply({});
    c->action = replacement;
    c->status = ClearanceStatus::Approved;
    log_clearance(*c, time(), {{"by", "operator"}, {"modified", true}});
    log_.append("replan", time(), {{"callsign", c->callsign}, {"reason", "modified"}, {"clearance", id}});
    return {};
}

CommandResult Episode::reject(const std::string& id, const std::string& wall) {
    const Json args{{"id", id}};
    auto reply = [&](CommandResult r) { return console_result(log_, time(), "reject", args, wall, std::move(r)); };
    if (closed_) return reply({CommandResult::Code::Conflict, "episode terminated"});
    Clearance* c = find_clearance(id);
    if (!c) return reply({CommandResult::Code::NotFound, "unknown clearance " + id});
    if (c->status != ClearanceStatus::Proposed) return reply({CommandResult::Code::Conflict, id + " is " + to_string(c->status)});
    reply({});
    c->status = ClearanceStatus::Rejected;
    log_clearance(*c, time(), {{"by", "operator"}});
    replan_aircraft(c->callsign, "rejected");
    return {};
}

void Episode::replan_aircraft(const std::string& callsign, const std::string& reason) {
    AirspacePlan next = world_.plan;
    FlightPlan& fp = next.plans.at(callsign);
    const AircraftState* st = world_.snapshot.find(callsign);
    const std::string mid = fp.allocate_id("X");
    fp.manoeuvres.push_back({mid, "replan", {{"reason", reason}}});
    if (st) {
        std::vector<PlannedAction> lateral(1);
        lateral[0].trigger = Condition::immediate();
        lateral[0].action = Action::resume_nav(fp.exit.fix_id);
        lateral[0].completion = Condition::at_fix(fp.exit.fix_id, 0.0);
        std::vector<PlannedAction> vertical;
        if (fp.exit_abandoned) {
            PlannedAction hold;
            const int fl = static_cast<int>(std::lround(st->target_altitude_ft / 1000.0)) * 10;
            hold.trigger = Condition::immediate();
            hold.action = Action::maintain(fl);
            hold.completion = Condition::never();
            vertical.push_back(hold);
        } else {
            vertical = path_to_exit(fp, *st, *lanes_, scenario_.performance);
        }
        std::map<Axis, std::vector<PlannedAction>> fresh{{Axis::Lateral, lateral}, {Axis::Vertical, vertical}, {Axis::Speed, {}}};
        for (auto& [axis, phases] : fresh) {
            if (constraint_violation(footprint_of(callsign, phases, *st), next.constraints)) continue;
            adopt_phases(fp, phases, mid);
            auto& chain = fp.chain(axis);
            std::erase_if(chain, [](const PlannedAction& pa) { return pa.status != ActionStatus::Complete; });
            chain.insert(chain.end(), phases.begin(), phases.end());
        }
    } else {
        auto spec = std::find_if(roster_.begin(), roster_.end(), [&](const AircraftSpec& a) { return a.callsign == callsign; });
        const EntryState entry{callsign, spec->route_id, spec->entry_fl * kFeetPerFlightLevel, spec->speed_kt, 0.0};
        FlightPlan fresh = build_nominal_plan(entry, lanes_->route(spec->route_id), fp.pfl, fp.exit, scenario_.performance);
        for (Axis axis : kAllAxes) {
            auto phases = fresh.chain(axis);
            adopt_phases(fp, phases, mid);
            fp.chain(axis) = phases;
        }
    }
    ++next.revision;
    world_.adopt(std::move(next));
    supersede_missing();
    log_.append("replan", time(), {{"callsign", callsign}, {"reason", reason}, {"plan", plan_digest(world_.plan.plans.at(callsign))}});
}

CommandResult Episode::inject(const AircraftSpec& spec_in, const std::string& wall) {
    AircraftSpec spec = spec_in;
    spec.entry_time = std::max(spec.entry_time, time());
    const Json args = aircraft_to_json(spec);
    auto reply = [&](CommandResult r) { return console_result(log_, time(), "inject", args, wall, std::move(r)); };
    if (closed_) return reply({CommandResult::Code::Conflict, "episode terminated"});
    try {
        validate_aircraft(scenario_, spec, "/aircraft");
    } catch (const ScenarioError& e) {
        return reply({CommandResult::Code::Invalid, e.what()});
    }
    const bool taken = std::any_of(roster_.begin(), roster_.end(), [&](const AircraftSpec& a) { return a.callsign == spec.callsign; });
    if (taken) return reply({CommandResult::Code::Invalid, "callsign " + spec.callsign + " already in the episode"});
    reply({});
    roster_.push_back(spec);
    world_.schedule({spec.callsign, spec.route_id, spec.entry_time, spec.entry_fl * kFeetPerFlightLevel, spec.speed_kt});
    world_.runtime[spec.callsign].perturbation =
        draw_perturbation(scenario_.seed, -1, {spec.callsign}, scenario_.perturbation).of(spec.callsign);
    return {};
}

Json Episode::snapshot(const std::string& status) const {
    Json pending = Json::array();
    for (const auto& c : clearances_) {
        if (c.status == ClearanceStatus::Proposed || c.status == ClearanceStatus::Approved) pending.push_back(clearance_to_json(c));
    }
    Json active_alerts = Json::array();
    for (const auto& a : alerts_) {
        bool live = false;
        for (const auto& cs : a.at("callsigns")) {
            const auto name = cs.get<std::string>();
            live = live || world_.snapshot.find(name) != nullptr ||
                   std::any_of(world_.entrants.begin(), world_.entrants.end(),
                               [&](const ScheduledEntrant& e) { return e.callsign == name; });
        }
        if (live) active_alerts.push_back(a);
    }
    return Json{{"schema", "skylane.snapshot/1"},
                {"t", time()},
                {"status", closed_ ? std::string("finished") : status},
                {"revision", world_.plan.revision},
                {"aircraft", world_.snapshot.aircraft},
                {"plan", world_.plan},
                {"pending_clearances", pending},
                {"alerts", active_alerts},
                {"log_hash", log_.hash_hex()},
                {"log_size", log_.records().size()}};
}

std::vector<ConflictRecord> executed_violations(const std::vector<Trajectory>& executed, const SeparationMinima& minima) {
    std::vector<ConflictRecord> out;
    for (std::size_t i = 0; i < executed.size(); ++i) {
        for (std::size_t j = i + 1; j < executed.size(); ++j) {
            auto recs = detect_pair(executed[i], executed[j], RolloutSource{}, minima, ClassThresholds{});
            out.insert(out.end(), recs.begin(), recs.end());
        }
    }
    std::sort(out.begin(), out.end(), record_less);
    return out;
}

EpisodeResult run_episode(const Scenario& sc, const EpisodeOptions& opts) {
    Episode ep(sc, opts);
    ep.run();
    EpisodeResult r;
    r.log = ep.log();
    auto report = emit_metrics(r.log);
    r.metrics = std::move(report.metrics);
    r.report = std::move(report.text);
    r.exit_code = ep.exit_code();
    for (const auto& [_, tr] : ep.executed()) r.executed.push_back(tr);
    return r;
}

ReplayResult replay(const EventLog& log) {
    if (log.empty() || log.records().front().at("type") != "header") throw std::runtime_error("replay: log has no header");
    const Json& header = log.records().front();
    if (header.value("schema", std::string()) != kEventSchema) throw std::runtime_error("replay: unsupported log schema");
    Scenario sc = parse_scenario(header.at("scenario"));
    EpisodeOptions opts;
    const Json& cfg = header.at("config");
    opts.auto_approve = cfg.value("auto_approve", true);
    if (cfg.contains("auto_approve_timeout_s")) opts.auto_approve_timeout_s = cfg.at("auto_approve_timeout_s").get<double>();
    opts.frame_stride_s = cfg.value("frame_stride_s", opts.frame_stride_s);
    opts.frame_span_s = cfg.value("frame_span_s", opts.frame_span_s);

    std::vector<const Json*> console;
    for (const auto& rec : log.records())
        if (rec.at("type") == "console") console.push_back(&rec);

    Episode ep(sc, opts);
    std::size_t next = 0;
    auto apply_due = [&] {
        while (next < console.size() && console[next]->at("t").get<double>() <= ep.time() + kEps) {
            const Json& rec = *console[next++];
            const std::string cmd = rec.at("command").get<std::string>();
            const Json& args = rec.at("args");
            const std::string wall = rec.contains("wall") ? rec.at("wall").get<std::string>() : std::string();
            if (cmd == "approve") {
                ep.approve(args.at("id").get<std::string>(), wall);
            } else if (cmd == "modify") {
                ep.modify(args.at("id").get<std::string>(), args.at("action").get<Action>(), wall);
            } else if (cmd == "reject") {
                ep.reject(args.at("id").get<std::string>(), wall);
            } else if (cmd == "inject") {
                const AircraftSpec spec = parse_aircraft(args, "/args");
                ep.inject(spec, wall);
            } else {
                ep.note_console(cmd, args, wall);
            }
        }
    };
    while (!ep.finished()) {
        apply_due();
        ep.run_cycle();
    }
    apply_due();

    ReplayResult r;
    r.logged_hash = log.hash_hex();
    r.episode.log = ep.log();
    auto report = emit_metrics(r.episode.log);
    r.episode.metrics = std::move(report.metrics);
    r.episode.report = std::move(report.text);
    r.episode.exit_code = ep.exit_code();
    for (const auto& [_, tr] : ep.executed()) r.episode.executed.push_back(tr);
    r.replayed_hash = r.episode.log.hash_hex();
    r.match = r.logged_hash == r.replayed_hash;
    return r;
}

}  // namespace skylane
