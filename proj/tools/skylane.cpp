// skylane: run, verify, replay and inspect sector scenarios.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "skylane/gateway.hpp"
#include "skylane/runner.hpp"

namespace fs = std::filesystem;
using namespace skylane;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> rollouts;
    std::optional<int> d_max;
    std::optional<double> dt;
    std::optional<double> cadence;
};

Scenario load_with(const std::string& path, const Overrides& o) {
    Scenario sc = load_scenario(path);
    if (o.seed) sc.seed = *o.seed;
    if (o.rollouts) sc.rollouts = *o.rollouts;
    if (o.d_max) sc.search.d_max = *o.d_max;
    if (o.dt) sc.sim.dt_s = *o.dt;
    if (o.cadence) sc.sim.cadence_s = *o.cadence;
    // Re-validate so overrides obey the same rules as the file.
    return parse_scenario(scenario_to_json(sc));
}

Json trajectory_line(const Trajectory& tr) {
    Json samples = Json::array();
    for (const auto& s : tr.samples) {
        samples.push_back({s.t, s.position.x, s.position.y, s.altitude_ft, s.ground_speed_kt, s.vertical_rate_fpm,
                           s.track_deg, s.s, to_string(s.lane)});
    }
    Json j{{"callsign", tr.callsign},
           {"route", tr.route_id},
           {"columns", {"t", "x", "y", "alt_ft", "gs_kt", "vr_fpm", "track_deg", "s_nm", "lane"}},
           {"samples", samples}};
    if (tr.exit_time) j["exit_time"] = *tr.exit_time;
    return j;
}

void write_outputs(const fs::path& dir, const EventLog& log, const std::vector<Trajectory>& executed) {
    fs::create_directories(dir);
    log.write(dir / "events.jsonl");
    const MetricsReport rep = emit_metrics(log);
    std::ofstream(dir / "metrics.json") << metrics_to_json(rep.metrics).dump(2) << "\n";
    std::ofstream(dir / "report.txt") << rep.text;
    std::ofstream traj(dir / "trajectories.jsonl");
    for (const auto& tr : executed) traj << trajectory_line(tr).dump() << "\n";
}

std::vector<Trajectory> executed_of(const Episode& ep) {
    std::vector<Trajectory> out;
    for (const auto& [_, tr] : ep.executed()) out.push_back(tr);
    return out;
}

// Drives the core on this thread while the server answers requests.
void serve(GatewayCore& core, const std::string& host, int port, int pace_ms, bool linger) {
    GatewayServer server(core);
    const int bound = server.start(host, port);
    std::cerr << "gateway listening on http://" << host << ":" << bound << "/api/v1\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::atomic<bool> done{false};
    std::thread watcher([&] {
        while (!g_stop && !(core.finished() && !linger)) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        done = true;
    });
    core.run(done, std::chrono::milliseconds(pace_ms));
    watcher.join();
    server.stop();
}

int cmd_run(const std::string& path, const Overrides& o, std::optional<int> port, bool auto_approve,
            std::optional<double> approve_timeout, const std::string& out, const std::string& host, int pace_ms,
            bool linger, bool serial) {
    Scenario sc = load_with(path, o);
    EpisodeOptions opts;
    opts.parallel = !serial;
    // Headless runs have nobody to approve clearances.
    opts.auto_approve = port ? auto_approve : true;
    opts.auto_approve_timeout_s = approve_timeout;
    Episode ep(std::move(sc), opts);
    if (port) {
        GatewayCore core(ep);
        serve(core, host, *port, pace_ms, linger);
    } else {
        ep.run();
    }
    const MetricsReport rep = emit_metrics(ep.log());
    write_outputs(out, ep.log(), executed_of(ep));
    std::cout << rep.text;
    std::cout << "log hash " << ep.log().hash_hex() << "\noutputs in " << out << "\n";
    return ep.exit_code();
}

int cmd_verify(const std::string& path, const Overrides& o, bool as_json) {
    Episode ep(load_with(path, o));
    ep.run_cycle();
    Json tsrs = Json::array(), resolutions = Json::array();
    for (const auto& rec : ep.log().records()) {
        if (rec.at("type") == "tsr") tsrs.push_back(rec);
        if (rec.at("type") == "resolution") resolutions.push_back(rec);
    }
    if (as_json) {
        std::cout << Json{{"tsr", tsrs}, {"resolutions", resolutions}}.dump(2) << "\n";
        return ep.exit_code();
    }
    if (tsrs.empty()) {
        std::cout << "no aircraft within lookahead at t=0\n";
        return 0;
    }
    const Json& first = tsrs.front();
    std::cout << "initial TSR (revision " << first.at("revision") << "): " << first.at("records").size() << " conflict(s)\n";
    for (const auto& r : first.at("records")) {
        std::cout << "  " << r.at("ac1").get<std::string>() << "/" << r.at("ac2").get<std::string>() << "  "
                  << r.at("class").at("label").get<std::string>() << "  t_first=" << r.at("t_first") << "s  cpa "
                  << r.at("cpa").at("distance_nm") << " NM / " << r.at("cpa").at("vertical_ft") << " ft  ["
                  << r.at("source").at("label").get<std::string>() << "]\n";
    }
    for (const auto& res : resolutions) {
        std::cout << "resolution: " << res.at("outcome").get<std::string>() << "\n";
        for (const auto& a : res.at("applied")) {
            std::cout << "  depth " << a.at("depth") << "  " << a.at("strategy_id").get<std::string>() << " (priority "
                      << a.at("priority") << ")  " << a.at("label").get<std::string>() << "\n";
        }
        const Json& nodes = res.at("trace").at("nodes");
        std::cout << "  trace: " << nodes.size() << " node(s), depth " << res.at("trace").at("depth") << ", "
                  << res.at("stats").at("expansions") << " expansion(s), " << res.at("stats").at("simulations")
                  << " simulation(s)\n";
        for (const auto& n : nodes) {
            if (n.at("parent").get<int>() < 0) continue;
            std::cout << "    #" << n.at("id") << " <- #" << n.at("parent") << "  "
                      << n.at("strategy").get<std::string>() << "  tsr=" << n.at("tsr_size") << "  "
                      << n.at("outcome").get<std::string>() << "\n";
        }
    }
    const Json& last = tsrs.back();
    std::cout << "final TSR (revision " << last.at("revision") << "): " << last.at("records").size() << " conflict(s)\n";
    return ep.exit_code();
}

int cmd_replay(const std::string& path, std::optional<int> port, const std::string& host, int pace_ms) {
    EventLog log = EventLog::read(path);
    if (port) {
        GatewayCore core(std::move(log));
        serve(core, host, *port, pace_ms, true);
        return 0;
    }
    const ReplayResult r = replay(log);
    std::cout << "logged   " << r.logged_hash << "\nreplayed " << r.replayed_hash << "\n"
              << (r.match ? "replay matches\n" : "replay DIFFERS\n");
    return r.match ? r.episode.exit_code : 1;
}

int cmd_lanes(const std::string& path) {
    const Scenario sc = load_scenario(path);
    const LaneNetwork net(sc.routes, sc.lane_offset_nm);
    Json out{{"schema", "skylane.lanes/1"}, {"offset_nm", sc.lane_offset_nm}, {"routes", Json::array()}};
    for (const auto& [id, route] : net.routes()) {
        Json lanes = Json::object();
        for (LaneSide side : {LaneSide::Left, LaneSide::Centre, LaneSide::Right}) {
            const Lane& lane = net.lane(id, side);
            lanes[to_string(side)] = {{"polyline", lane.polyline()}, {"length_nm", lane.length()}};
        }
        const double spacing = min_lane_spacing(net.lane(id, LaneSide::Left), net.lane(id, LaneSide::Right), 0.1);
        out["routes"].push_back({{"id", id}, {"lanes", lanes}, {"min_outer_spacing_nm", spacing}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sector conflict detection and resolution simulator"};
    app.require_subcommand(1);

    Overrides o;
    auto add_overrides = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "Override the scenario seed");
        sub->add_option("--rollouts", o.rollouts, "Perturbed rollouts per verification")->check(CLI::PositiveNumber);
        sub->add_option("--dmax", o.d_max, "Search depth limit")->check(CLI::PositiveNumber);
        sub->add_option("--dt", o.dt, "Simulation step in seconds")->check(CLI::PositiveNumber);
        sub->add_option("--cadence", o.cadence, "Replanning cadence in seconds")->check(CLI::PositiveNumber);
    };

    std::string scenario_path, log_path, out_dir = "out", host = "127.0.0.1";
    std::optional<int> port;
    std::optional<double> approve_timeout;
    bool auto_approve = false, as_json = false, no_linger = false, serial = false;
    int pace_ms = 0;

    auto* run = app.add_subcommand("run", "Run an episode to completion");
    run->add_option("scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    add_overrides(run);
    run->add_option("--serve", port, "Attach the operator gateway on this port (0 picks one)");
    run->add_flag("--auto-approve", auto_approve, "Approve proposed clearances without the operator");
    run->add_option("--approve-timeout", approve_timeout, "Approve proposed clearances after this many seconds");
    run->add_option("--out", out_dir, "Directory for events, metrics, report and trajectories");
    run->add_option("--host", host, "Gateway bind address");
    run->add_option("--pace-ms", pace_ms, "Wall-clock pause after each served cycle");
    run->add_flag("--no-linger", no_linger, "Stop serving once the episode ends");
    run->add_flag("--serial", serial, "Use the serial ensemble and detector");

    auto* verify = app.add_subcommand("verify", "Plan and resolve once; print the TSR and decision trace");
    verify->add_option("scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    add_overrides(verify);
    verify->add_flag("--json", as_json, "Print raw JSON records");

    auto* rep = app.add_subcommand("replay", "Re-run a logged episode and compare hashes, or serve it");
    rep->add_option("log", log_path, "events.jsonl")->required()->check(CLI::ExistingFile);
    rep->add_option("--serve", port, "Serve the recorded timeline on this port");
    rep->add_option("--host", host, "Gateway bind address");
    rep->add_option("--pace-ms", pace_ms, "Wall-clock pause between frames when resumed");

    auto* lanes = app.add_subcommand("lanes", "Print lane polylines for every route");
    lanes->add_option("scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*run) return cmd_run(scenario_path, o, port, auto_approve, approve_timeout, out_dir, host, pace_ms, !no_linger, serial);
        if (*verify) return cmd_verify(scenario_path, o, as_json);
        if (*rep) return cmd_replay(log_path, port, host, pace_ms);
        if (*lanes) return cmd_lanes(scenario_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
