#include "skylane/twin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "skylane/hash.hpp"

namespace skylane {

AircraftPerturbation Perturbation::of(const std::string& callsign) const {
    auto it = per_aircraft.find(callsign);
    return it == per_aircraft.end() ? AircraftPerturbation{} : it->second;
}

Perturbation draw_perturbation(std::uint64_t seed, int scenario_index, const std::vector<std::string>& callsigns,
                               const PerturbationSpec& spec) {
    Perturbation p;
    p.scenario_index = scenario_index;
    for (const auto& cs : callsigns) {
        std::uint64_t key = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(scenario_index) + 0x51ULL));
        key = splitmix64(key ^ fnv1a(cs));
        const double u_speed = unit_interval(key);
        const double u_delay = unit_interval(splitmix64(key));
        AircraftPerturbation a;
        a.speed_factor = std::clamp(1.0 + spec.speed_spread * (2.0 * u_speed - 1.0), 0.90, 1.10);
        a.pilot_delay_s = std::clamp(spec.max_pilot_delay_s * u_delay, 0.0, 60.0);
        p.per_aircraft.emplace(cs, a);
    }
    return p;
}

const char* to_string(FiringKind k) {
    switch (k) {
    case FiringKind::Activated: return "Activated";
    case FiringKind::EffectApplied: return "EffectApplied";
    default: return "Completed";
    }
}

const Sample* Trajectory::at(double t) const {
    auto it = std::lower_bound(samples.begin(), samples.end(), t - 1e-6,
                               [](const Sample& s, double v) { return s.t < v; });
    if (it == samples.end() || std::abs(it->t - t) > 1e-6) return nullptr;
    return &*it;
}

namespace {

constexpr double kEps = 1e-9;

double track_of(Vec2 dir) {
    double deg = std::atan2(dir.x, dir.y) * 180.0 / std::numbers::pi;
    if (deg < 0.0) deg += 360.0;
    return deg;
}

double clamp_speed(double kt, const TwinConfig& cfg) { return std::clamp(kt, cfg.min_speed_kt, cfg.max_speed_kt); }

double level_ft(int fl, const TwinConfig& cfg) {
    return std::clamp(fl * kFeetPerFlightLevel, cfg.floor_ft, cfg.ceiling_ft);
}

// True if executing the action would not change anything the aircraft is
// already doing; such actions are not transmitted as clearances.
bool is_noop(const Action& a, const AircraftState& st, const TwinConfig& cfg) {
    switch (a.kind) {
    case Action::Kind::ClimbTo:
    case Action::Kind::DescendTo:
    case Action::Kind::MaintainLevel: return std::abs(st.target_altitude_ft - level_ft(a.level_fl, cfg)) < 1e-6;
    case Action::Kind::SetSpeed: return std::abs(st.commanded_speed_kt - a.speed_kt) < 1e-6;
    case Action::Kind::FlyLane: return st.lane == a.side && st.route_id == a.route_id;
    case Action::Kind::ResumeNav: return st.lane == LaneSide::Centre;
    }
    return false;
}

void move_to_lane(AircraftState& st, LaneSide side, const LaneNetwork& lanes) {
    const Lane& lane = lanes.lane(st.route_id, side);
    const double s = std::clamp(along_track(lane, st.position).s, 0.0, lane.length());
    st.lane = side;
    st.s = s;
    st.position = point_at(lane, s);
    st.track_deg = track_of(lane.direction_at(s));
}

void apply_effect(AircraftState& st, const Action& a, const AircraftPerturbation& pert, const LaneNetwork& lanes,
                  const TwinConfig& cfg) {
    switch (a.kind) {
    case Action::Kind::ClimbTo:
    case Action::Kind::DescendTo:
    case Action::Kind::MaintainLevel: st.target_altitude_ft = level_ft(a.level_fl, cfg); break;
    case Action::Kind::SetSpeed:
        st.commanded_speed_kt = a.speed_kt;
        st.ground_speed_kt = clamp_speed(a.speed_kt * pert.speed_factor, cfg);
        break;
    case Action::Kind::FlyLane:
        if (a.route_id != st.route_id) {
            throw IntegrityError(st.callsign + ": lane " + a.route_id + " is not on its route " + st.route_id);
        }
        move_to_lane(st, a.side, lanes);
        break;
    case Action::Kind::ResumeNav: move_to_lane(st, LaneSide::Centre, lanes); break;
    }
}

bool safe_eval(const Condition& c, const std::string& owner, const EvalContext& ctx) {
    try {
        return evaluate_condition(c, owner, ctx);
    } catch (const EvaluationError&) {
        return false;
    }
}

Trajectory& trajectory_for(std::map<std::string, Trajectory>& rec, const AircraftState& st) {
    auto [it, inserted] = rec.try_emplace(st.callsign);
    if (inserted) {
        it->second.callsign = st.callsign;
        it->second.route_id = st.route_id;
    }
    return it->second;
}

Sample sample_of(const AircraftState& st, double t) {
    return {t, st.position, st.altitude_ft, st.ground_speed_kt, st.vertical_rate_fpm, st.track_deg, st.s, st.lane};
}

void refresh_vertical_rate(AircraftState& st, const AircraftPerturbation& pert, const TwinConfig& cfg) {
    const double diff = st.target_altitude_ft - st.altitude_ft;
    if (std::abs(diff) < 1e-9) {
        st.vertical_rate_fpm = 0.0;
        return;
    }
    const double rate = (diff > 0 ? cfg.perf.climb_rate_fpm : cfg.perf.descent_rate_fpm) * pert.speed_factor;
    const double max_step_rate = std::abs(diff) * 60.0 / cfg.dt_s;
    st.vertical_rate_fpm = std::copysign(std::min(rate, max_step_rate), diff);
}

}  // namespace

void World::schedule(ScheduledEntrant e) {
    auto pos = std::upper_bound(entrants.begin(), entrants.end(), e, [](const auto& a, const auto& b) {
        return a.entry_time != b.entry_time ? a.entry_time < b.entry_time : a.callsign < b.callsign;
    });
    entrants.insert(pos, std::move(e));
}

void World::inject(const ScheduledEntrant& e, const LaneNetwork& lanes, const TwinConfig& cfg) {
    const Lane& lane = lanes.lane(e.route_id, LaneSide::Centre);
    const auto pert = runtime[e.callsign].perturbation;
    AircraftState st;
    st.callsign = e.callsign;
    st.route_id = e.route_id;
    st.lane = LaneSide::Centre;
    st.s = 0.0;
    st.position = point_at(lane, 0.0);
    st.altitude_ft = std::clamp(e.altitude_ft, cfg.floor_ft, cfg.ceiling_ft);
    st.target_altitude_ft = st.altitude_ft;
    st.commanded_speed_kt = e.speed_kt;
    st.ground_speed_kt = clamp_speed(e.speed_kt * pert.speed_factor, cfg);
    st.track_deg = track_of(lane.direction_at(0.0));
    snapshot.insert(std::move(st));
}

void World::adopt(AirspacePlan next) {
    plan = std::move(next);
    for (auto& [cs, rt] : runtime) {
        auto pit = plan.plans.find(cs);
        std::erase_if(rt.pending, [&](const PendingEffect& e) {
            return pit == plan.plans.end() || pit->second.find(e.action_id) == nullptr;
        });
    }
}

void World::apply_perturbation(const Perturbation& p, const TwinConfig& cfg) {
    for (auto& [cs, rt] : runtime) rt.perturbation = p.of(cs);
    for (const auto& [cs, a] : p.per_aircraft) runtime[cs].perturbation = a;
    for (auto& st : snapshot.aircraft) {
        st.ground_speed_kt = clamp_speed(st.commanded_speed_kt * runtime[st.callsign].perturbation.speed_factor, cfg);
    }
}

StepReport World::step(const LaneNetwork& lanes, const TwinConfig& cfg, const StepOptions& opts,
                       std::map<std::string, Trajectory>* recorder, double lookahead_limit) {
    const double t = snapshot.time;
    StepReport report;

    while (!entrants.empty() && entrants.front().entry_time <= t + kEps &&
           entrants.front().entry_time <= lookahead_limit + kEps) {
        const ScheduledEntrant e = entrants.front();
        entrants.erase(entrants.begin());
        if (snapshot.find(e.callsign) || snapshot.has_departed(e.callsign)) continue;
        inject(e, lanes, cfg);
        report.entered.push_back(e.callsign);
    }

    history.observe(snapshot, lanes);

    auto log_event = [&](const AircraftState& st, const std::string& id, FiringKind kind) {
        if (recorder) trajectory_for(*recorder, st).firings.push_back({t, id, kind});
    };

    // Every trigger and completion sees the same state S(t).
    const AirspaceSnapshot frozen = snapshot;
    const EvalContext ctx{frozen, history, lanes, cfg.lateral_minimum_nm, cfg.perf.level_tolerance_ft};
    const bool triggers_allowed = !opts.trigger_cutoff || t <= *opts.trigger_cutoff + kEps;

    for (auto& st : snapshot.aircraft) {
        auto pit = plan.plans.find(st.callsign);
        if (pit == plan.plans.end()) continue;
        FlightPlan& fp = pit->second;
        AircraftRuntime& rt = runtime[st.callsign];
        const AircraftState& seen = *frozen.find(st.callsign);
        for (Axis axis : kAllAxes) {
            for (auto& pa : fp.chain(axis)) {
                if (pa.status == ActionStatus::Complete) continue;
                if (pa.status == ActionStatus::Active) {
                    const bool awaiting_effect = std::any_of(rt.pending.begin(), rt.pending.end(),
                                                             [&](const PendingEffect& e) { return e.action_id == pa.id; });
                    if (awaiting_effect || !safe_eval(pa.completion, st.callsign, ctx)) break;
                    pa.status = ActionStatus::Complete;
                    log_event(st, pa.id, FiringKind::Completed);
                    continue;
                }
                if (!triggers_allowed || !safe_eval(pa.trigger, st.callsign, ctx)) break;
                const bool noop = is_noop(pa.action, seen, cfg);
                if (!noop && opts.gate && *opts.gate && !(*opts.gate)(st.callsign, pa, t)) break;
                pa.status = ActionStatus::Active;
                log_event(st, pa.id, FiringKind::Activated);
                if (noop) {
                    log_event(st, pa.id, FiringKind::EffectApplied);
                    if (!safe_eval(pa.completion, st.callsign, ctx)) break;
                    pa.status = ActionStatus::Complete;
                    log_event(st, pa.id, FiringKind::Completed);
                    continue;
                }
                report.issued.push_back({t, st.callsign, pa.id, pa.action});
                rt.pending.push_back({pa.id, pa.action, t + rt.perturbation.pilot_delay_s});
                break;
            }
        }
    }

    for (auto& st : snapshot.aircraft) {
        AircraftRuntime& rt = runtime[st.callsign];
        std::vector<PendingEffect> keep;
        for (auto& e : rt.pending) {
            if (e.apply_time <= t + kEps) {
                apply_effect(st, e.action, rt.perturbation, lanes, cfg);
                log_event(st, e.action_id, FiringKind::EffectApplied);
            } else {
                keep.push_back(std::move(e));
            }
        }
        rt.pending = std::move(keep);
        refresh_vertical_rate(st, rt.perturbation, cfg);
        if (recorder) trajectory_for(*recorder, st).samples.push_back(sample_of(st, t));
    }

    const double next = t + cfg.dt_s;
    std::vector<std::string> leaving;
    for (auto& st : snapshot.aircraft) {
        const Lane& lane = lanes.lane(st.route_id, st.lane);
        st.altitude_ft += st.vertical_rate_fpm * cfg.dt_s / 60.0;
        if (std::abs(st.altitude_ft - st.target_altitude_ft) < 1e-6) st.altitude_ft = st.target_altitude_ft;
        st.s += st.ground_speed_kt * cfg.dt_s / 3600.0;
        if (st.s >= lane.length() - kEps) {
            st.s = lane.length();
            st.position = lane.polyline().back();
            leaving.push_back(st.callsign);
        } else {
            st.position = point_at(lane, st.s);
            st.track_deg = track_of(lane.direction_at(st.s));
        }
    }
    snapshot.time = next;
    for (const auto& cs : leaving) {
        AircraftState& st = *snapshot.find(cs);
        AircraftRuntime& rt = runtime[cs];
        refresh_vertical_rate(st, rt.perturbation, cfg);
        if (recorder) {
            auto& tr = trajectory_for(*recorder, st);
            tr.samples.push_back(sample_of(st, next));
            tr.exit_time = next;
        }
        snapshot.remove(cs);
        report.departed.push_back(cs);
    }
    return report;
}

namespace {

void record_now(World& w, const TwinConfig& cfg, std::map<std::string, Trajectory>& rec) {
    for (auto& st : w.snapshot.aircraft) {
        refresh_vertical_rate(st, w.runtime[st.callsign].perturbation, cfg);
        auto& tr = trajectory_for(rec, st);
        if (tr.samples.empty() || tr.samples.back().t < w.time() - 1e-6) tr.samples.push_back(sample_of(st, w.time()));
    }
}

std::vector<Trajectory> flatten(std::map<std::string, Trajectory>&& rec) {
    std::vector<Trajectory> out;
    out.reserve(rec.size());
    for (auto& [_, tr] : rec) out.push_back(std::move(tr));
    return out;
}

}  // namespace

SimulationResult simulate(World world, const LaneNetwork& lanes, const TwinConfig& cfg, double duration_s,
                          const SimulateOptions& opts) {
    if (!(cfg.dt_s > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
    if (duration_s < 0.0 || duration_s > 3600.0 + 1e-9) {
        throw std::invalid_argument("simulate: horizon must be within [0, 3600] s");
    }
    SimulationResult result;
    std::map<std::string, Trajectory> rec;
    const double start = world.time();
    const double end = start + duration_s;
    const double lookahead_limit = start + opts.entry_lookahead_s.value_or(cfg.entry_lookahead_s);
    std::size_t capture = 0;

    while (world.time() < end - 1e-6) {
        while (capture < opts.capture_times.size() && opts.capture_times[capture] <= world.time() + 1e-6) {
            result.captures.push_back(world);
            ++capture;
        }
        if (world.finished()) break;
        world.step(lanes, cfg, opts.step, &rec, lookahead_limit);
    }
    record_now(world, cfg, rec);
    result.trajectories = flatten(std::move(rec));
    result.final_world = std::move(world);
    return result;
}

std::vector<Trajectory> rollout_counterfactual(const World& at_cut, const LaneNetwork& lanes, const TwinConfig& cfg,
                                               double duration_s) {
    SimulateOptions opts;
    opts.step.trigger_cutoff = at_cut.time();
    return simulate(at_cut, lanes, cfg, duration_s, opts).trajectories;
}

std::string RolloutSource::label() const {
    switch (kind) {
    case Kind::Nominal: return "nominal";
    case Kind::Perturbed: return "perturbed(" + std::to_string(index) + ")";
    default: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "counterfactual(%g)", cut_time);
        return buf;
    }
    }
}

bool operator<(const RolloutSource& a, const RolloutSource& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.index != b.index) return a.index < b.index;
    return a.cut_time < b.cut_time;
}

std::vector<const Rollout*> RolloutSet::all() const {
    std::vector<const Rollout*> out{&nominal};
    for (const auto& r : perturbed) out.push_back(&r);
    for (const auto& r : counterfactuals) out.push_back(&r);
    return out;
}

std::vector<double> counterfactual_cut_times(double start, const EnsembleConfig& cfg) {
    std::vector<double> cuts;
    if (!cfg.counterfactuals || !(cfg.cf_interval_s > 0.0)) return cuts;
    for (int k = 0;; ++k) {
        const double t = start + k * cfg.cf_interval_s;
        if (t > start + cfg.horizon_s - 1e-6) break;
        cuts.push_back(t);
    }
    return cuts;
}

namespace {

struct EnsemblePlan {
    World nominal_world;
    SimulationResult nominal;
    std::vector<std::string> callsigns;
    std::vector<double> cut_times;
};

EnsemblePlan prepare(const World& world, const LaneNetwork& lanes, const TwinConfig& cfg, const EnsembleConfig& ens) {
    if (ens.perturbed_count < 1) throw std::invalid_argument("ensemble needs at least one perturbed rollout");
    EnsemblePlan ep;
    ep.nominal_world = world;
    ep.nominal_world.apply_perturbation(Perturbation{}, cfg);
    for (const auto& st : world.snapshot.aircraft) ep.callsigns.push_back(st.callsign);
    for (const auto& e : world.entrants) ep.callsigns.push_back(e.callsign);
    std::sort(ep.callsigns.begin(), ep.callsigns.end());
    ep.cut_times = counterfactual_cut_times(world.time(), ens);
    SimulateOptions opts;
    opts.capture_times = ep.cut_times;
    ep.nominal = simulate(ep.nominal_world, lanes, cfg, ens.horizon_s, opts);
    return ep;
}

Rollout run_task(std::size_t i, const EnsemblePlan& ep, const World& world, const LaneNetwork& lanes,
                 const TwinConfig& cfg, const EnsembleConfig& ens) {
    Rollout r;
    const auto n = static_cast<std::size_t>(ens.perturbed_count);
    if (i < n) {
        const int index = static_cast<int>(i) + 1;
        r.source = {RolloutSource::Kind::Perturbed, index, 0.0};
        World w = world;
        w.apply_perturbation(draw_perturbation(ens.seed, index, ep.callsigns, ens.spec), cfg);
        r.trajectories = simulate(std::move(w), lanes, cfg, ens.horizon_s).trajectories;
    } else {
        const World& cut = ep.nominal.captures[i - n];
        r.source = {RolloutSource::Kind::Counterfactual, 0, cut.time()};
        r.trajectories = rollout_counterfactual(cut, lanes, cfg, ens.cf_duration_s);
    }
    return r;
}

RolloutSet assemble(const World& world, EnsemblePlan& ep, std::vector<Rollout>&& slots, const EnsembleConfig& ens) {
    RolloutSet set;
    set.revision = world.plan.revision;
    set.nominal.source = {RolloutSource::Kind::Nominal, 0, 0.0};
    set.nominal.trajectories = std::move(ep.nominal.trajectories);
    const auto n = static_cast<std::size_t>(ens.perturbed_count);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        (i < n ? set.perturbed : set.counterfactuals).push_back(std::move(slots[i]));
    }
    return set;
}

}  // namespace

RolloutSet simulate_ensemble(const World& world, const LaneNetwork& lanes, const TwinConfig& cfg,
                             const EnsembleConfig& ens) {
    EnsemblePlan ep = prepare(world, lanes, cfg, ens);
    const std::size_t tasks = static_cast<std::size_t>(ens.perturbed_count) + ep.nominal.captures.size();
    std::vector<Rollout> slots(tasks);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(tasks); ++i) {
        try {
            slots[static_cast<std::size_t>(i)] = run_task(static_cast<std::size_t>(i), ep, world, lanes, cfg, ens);
        } catch (...) {
#pragma omp critical(skylane_ensemble_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return assemble(world, ep, std::move(slots), ens);
}

RolloutSet simulate_ensemble_serial(const World& world, const LaneNetwork& lanes, const TwinConfig& cfg,
                                    const EnsembleConfig& ens) {
    EnsemblePlan ep = prepare(world, lanes, cfg, ens);
    const std::size_t tasks = static_cast<std::size_t>(ens.perturbed_count) + ep.nominal.captures.size();
    std::vector<Rollout> slots;
    slots.reserve(tasks);
    for (std::size_t i = 0; i < tasks; ++i) slots.push_back(run_task(i, ep, world, lanes, cfg, ens));
    return assemble(world, ep, std::move(slots), ens);
}

namespace {

void hash_trajectories(Fnv1a& h, const std::vector<Trajectory>& trajectories) {
    for (const auto& tr : trajectories) {
        h.text(tr.callsign);
        h.text(tr.route_id);
        h.f64(tr.exit_time.value_or(-1.0));
        for (const auto& s : tr.samples) {
            h.f64(s.t);
            h.f64(s.position.x);
            h.f64(s.position.y);
            h.f64(s.altitude_ft);
            h.f64(s.ground_speed_kt);
            h.f64(s.vertical_rate_fpm);
            h.f64(s.track_deg);
            h.f64(s.s);
            h.u64(static_cast<std::uint64_t>(s.lane));
        }
        for (const auto& f : tr.firings) {
            h.f64(f.time);
            h.text(f.action_id);
            h.u64(static_cast<std::uint64_t>(f.kind));
        }
    }
}

}  // namespace

std::uint64_t fingerprint(const std::vector<Trajectory>& trajectories) {
    Fnv1a h;
    hash_trajectories(h, trajectories);
    return h.value();
}

std::uint64_t fingerprint(const RolloutSet& set) {
    Fnv1a h;
    h.u64(static_cast<std::uint64_t>(set.revision));
    for (const Rollout* r : set.all()) {
        h.text(r->source.label());
        hash_trajectories(h, r->trajectories);
    }
    return h.value();
}

}  // namespace skylane
