#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "skylane/runner.hpp"

using namespace skylane;

namespace {

Json minimal_doc() {
    return Json::parse(R"({
      "schema": "skylane.scenario/1",
      "name": "minimal",
      "seed": 3,
      "sector": {"floor_fl": 200, "ceiling_fl": 450, "boundary": [[-10, -20], [90, -20], [90, 20], [-10, 20]]},
      "fixes": [{"id": "A", "x": 0, "y": 0}, {"id": "B", "x": 80, "y": 0}],
      "routes": [{"id": "AB", "fixes": ["A", "B"]}],
      "aircraft": [{"callsign": "SOLO1", "route": "AB", "entry_time": 0, "entry_fl": 350, "pfl": 350,
                    "exit": {"fix": "B", "fl": 350}, "speed_kt": 450}],
      "sim": {"dt_s": 5, "cadence_s": 10, "horizon_s": 900}
    })");
}

std::string error_of(const Json& doc) {
    try {
        parse_scenario(doc);
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("minimal scenario loads") {
    const Scenario sc = parse_scenario(minimal_doc());
    REQUIRE(sc.aircraft.size() == 1);
    CHECK(sc.aircraft[0].callsign == "SOLO1");
    CHECK(sc.routes.at(0).fixes.size() == 2);
    CHECK(sc.seed == 3);
    // Round trip through the serialiser.
    const Scenario again = parse_scenario(scenario_to_json(sc));
    CHECK(scenario_to_json(again) == scenario_to_json(sc));
}

TEST_CASE("scenario errors name their location") {
    Json doc = minimal_doc();
    doc["routes"][0]["fixes"][1] = "NOWHERE";
    const std::string unknown = error_of(doc);
    CHECK(unknown.find("NOWHERE") != std::string::npos);
    CHECK(unknown.find("/routes/0") != std::string::npos);

    doc = minimal_doc();
    doc["sim"]["cadence_s"] = 7;
    CHECK_FALSE(error_of(doc).empty());

    doc = minimal_doc();
    doc["aircraft"][0]["entry_time"] = -5;
    CHECK(error_of(doc).find("/aircraft/0") != std::string::npos);

    doc = minimal_doc();
    doc["schema"] = "something/9";
    CHECK_FALSE(error_of(doc).empty());

    CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ScenarioError);
}

TEST_CASE("empty scenario runs to empty metrics") {
    Json doc = minimal_doc();
    doc["aircraft"] = Json::array();
    const Scenario sc = parse_scenario(doc);
    CHECK(sc.aircraft.empty());
    const auto result = run_episode(sc);
    CHECK(result.metrics.violations == 0);
    CHECK(result.metrics.interventions == 0);
    CHECK(result.metrics.fallbacks == 0);
    CHECK(result.metrics.resolutions == 0);
    CHECK_FALSE(result.metrics.failure);
    CHECK(result.exit_code == 0);
}

TEST_CASE("head-on episode end to end") {
    Episode ep(load_scenario(fixture::scenario_path("headon")));
    ep.run();
    const auto rep = emit_metrics(ep.log());
    CHECK(rep.metrics.violations == 0);
    CHECK(rep.metrics.interventions == 2);
    CHECK(rep.metrics.fallbacks == 0);
    CHECK(rep.metrics.resolutions >= 1);
    CHECK(rep.metrics.expansions >= 1);
    CHECK(rep.metrics.strategy_histogram.at("lateral_offset") >= 1);
    CHECK(ep.exit_code() == 0);

    // Independent re-scan of the executed ground truth.
    std::vector<Trajectory> executed;
    for (const auto& [_, tr] : ep.executed()) executed.push_back(tr);
    CHECK(executed_violations(executed, {}).empty());
    RolloutSet as_set;
    as_set.nominal.trajectories = executed;
    CHECK(oracle::brute_force_violations(as_set, 5.0, 1000.0).empty());

    SUBCASE("every non-trivial action took effect through exactly one issued clearance") {
        std::map<std::string, int> issued;
        for (const auto& c : ep.clearances()) {
            if (c.issued_time) ++issued[c.callsign + "/" + c.action_id + "@" + std::to_string(*c.issued_time)];
        }
        std::map<std::string, int> activations;
        for (const auto& [cs, tr] : ep.executed()) {
            for (std::size_t i = 0; i < tr.firings.size(); ++i) {
                const auto& f = tr.firings[i];
                if (f.kind != FiringKind::Activated) continue;
                const bool immediate_effect = i + 1 < tr.firings.size() && tr.firings[i + 1].action_id == f.action_id &&
                                              tr.firings[i + 1].kind == FiringKind::EffectApplied &&
                                              tr.firings[i + 1].time == f.time;
                if (immediate_effect) continue;
                ++activations[cs + "/" + f.action_id + "@" + std::to_string(f.time)];
            }
        }
        CHECK(activations == issued);
        CHECK(issued.size() >= 4);
    }
}

TEST_CASE("identical runs give identical log hashes and replay matches") {
    const Scenario sc = load_scenario(fixture::scenario_path("headon"));
    const auto first = run_episode(sc);
    const auto second = run_episode(sc);
    CHECK(first.log.hash() == second.log.hash());
    const auto serial = run_episode(sc, EpisodeOptions{.parallel = false});
    CHECK(serial.log.hash() == first.log.hash());
    const auto replayed = replay(first.log);
    CHECK(replayed.match);
    CHECK(replayed.logged_hash == first.log.hash_hex());

    Scenario other = sc;
    other.seed = sc.seed + 1;
    CHECK(run_episode(other).log.hash() != first.log.hash());
}

TEST_CASE("event log invariants") {
    EventLog log;
    log.append("a", 1.0);
    log.append("b", 1.0, {{"x", 1}});
    CHECK_THROWS_AS(log.append("c", 0.5), std::logic_error);
    CHECK(log.records().size() == 2);
    CHECK(log.records()[1].at("seq") == 1);

    EventLog with_wall;
    with_wall.append("a", 1.0, {{"wall", "2026-01-01T00:00:00.000Z"}});
    EventLog other_wall;
    other_wall.append("a", 1.0, {{"wall", "2030-06-01T12:00:00.000Z"}});
    CHECK(with_wall.hash() == other_wall.hash());
    EventLog other_body;
    other_body.append("a", 1.0, {{"wall", "2026-01-01T00:00:00.000Z"}, {"x", 2}});
    CHECK(with_wall.hash() != other_body.hash());

    const auto path = std::filesystem::temp_directory_path() / "skylane_eventlog_test.jsonl";
    log.write(path);
    const EventLog back = EventLog::read(path);
    CHECK(back.hash() == log.hash());
    std::filesystem::remove(path);
}

TEST_CASE("metrics aggregation") {
    const auto empty = emit_metrics(EventLog{});
    CHECK(empty.metrics.violations == 0);
    CHECK(empty.metrics.interventions == 0);
    CHECK(empty.metrics.expansions == 0);
    CHECK(empty.metrics.cycles == 0);
    CHECK_FALSE(empty.metrics.failure);
    CHECK_FALSE(empty.text.empty());

    const auto failed = run_episode(load_scenario(fixture::scenario_path("overconstrained")));
    CHECK(failed.metrics.fallbacks >= 1);
    CHECK(failed.metrics.failure);
    CHECK(failed.exit_code == 2);
    CHECK(failed.metrics.violations == 0);
    const Json j = metrics_to_json(failed.metrics);
    CHECK(j.at("schema") == kMetricsSchema);
    CHECK(j.at("failure") == true);
}

TEST_CASE("executed violation scan") {
    Trajectory a, b;
    a.callsign = "A";
    b.callsign = "B";
    for (int i = 0; i <= 10; ++i) {
        Sample sa, sb;
        sa.t = sb.t = i * 5.0;
        sa.altitude_ft = sb.altitude_ft = 35000;
        sa.position = {0, 0};
        sb.position = {i < 5 ? 3.0 : 8.0, 0};
        a.samples.push_back(sa);
        b.samples.push_back(sb);
    }
    const auto v = executed_violations({a, b}, {});
    REQUIRE(v.size() == 1);
    CHECK(v[0].t_first == 0.0);
    CHECK(v[0].t_last == 20.0);
}
