#include "doctest.h"

#include <thread>

#include "../support/fixtures.hpp"
#include "httplib.h"
#include "skylane/gateway.hpp"

using namespace skylane;

namespace {

GatewayResponse command(GatewayCore& core, const std::string& name, Json args = Json::object()) {
    auto done = core.submit(name, std::move(args));
    core.tick();
    return done.get();
}

EpisodeOptions interactive() {
    EpisodeOptions o;
    o.auto_approve = false;
    return o;
}

Json clearance(const GatewayCore& core, const std::string& id) {
    const Json all = core.clearances().body;
    for (const auto& c : all.at("clearances"))
        if (c.at("id") == id) return c;
    return nullptr;
}

bool log_has(const Episode& ep, const std::string& type, const std::string& key, const std::string& value) {
    for (const auto& r : ep.log().records())
        if (r.at("type") == type && r.value(key, std::string{}) == value) return true;
    return false;
}

}  // namespace

TEST_CASE("paused gateway serves stable snapshots and reads leave the log alone") {
    Episode ep(load_scenario(fixture::scenario_path("headon")), interactive());
    GatewayCore core(ep);
    CHECK(command(core, "step", {{"n", 1}}).status == 200);
    REQUIRE(core.paused());
    const auto hash = ep.log().hash();
    const Json first = core.snapshot().body;
    CHECK(first.at("aircraft").size() == 2);
    CHECK(first.contains("revision"));
    for (int i = 0; i < 3; ++i) {
        core.status();
        core.plan("ALPHA1");
        core.tsr();
        core.traces();
        core.timeline_index();
        core.timeline(0.0);
        core.clearances();
    }
    CHECK_FALSE(core.tick());
    CHECK(core.snapshot().body == first);
    CHECK(ep.log().hash() == hash);
}

TEST_CASE("step advances exactly one cadence") {
    Episode ep(load_scenario(fixture::scenario_path("headon")), interactive());
    GatewayCore core(ep);
    command(core, "pause");
    const double t0 = core.status().body.at("t").get<double>();
    CHECK(command(core, "step", {{"n", 1}}).status == 200);
    const double t1 = core.status().body.at("t").get<double>();
    CHECK(t1 - t0 == doctest::Approx(ep.scenario().sim.cadence_s));
    CHECK_FALSE(core.tick());
    CHECK(core.status().body.at("t").get<double>() == t1);
    CHECK(command(core, "step", {{"n", 0}}).status == 400);
}

TEST_CASE("clearance approval, modification and rejection") {
    Episode ep(load_scenario(fixture::scenario_path("headon")), interactive());
    GatewayCore core(ep);
    command(core, "step", {{"n", 1}});
    const Json c1 = clearance(core, "C0001");
    const Json c2 = clearance(core, "C0002");
    REQUIRE(c1.is_object());
    REQUIRE(c2.is_object());
    CHECK(c1.at("status") == "Proposed");
    CHECK(core.snapshot().body.at("pending_clearances").size() == 2);

    // The offset side is constrained, so flipping it is refused with the reason.
    Json flipped = c1.at("action");
    flipped["lane"] = flipped.at("lane") == "Left" ? "Right" : "Left";
    const auto refused = command(core, "modify", {{"id", "C0001"}, {"action", flipped}});
    CHECK(refused.status == 409);
    CHECK(refused.body.at("error").get<std::string>().find("constrain") != std::string::npos);
    CHECK(clearance(core, "C0001").at("status") == "Proposed");

    CHECK(command(core, "approve", {{"id", "C9999"}}).status == 404);
    CHECK(command(core, "approve", {}).status == 400);
    CHECK(command(core, "approve", {{"id", "C0001"}}).status == 200);
    CHECK(command(core, "approve", {{"id", "C0001"}}).status == 409);
    command(core, "step", {{"n", 1}});
    CHECK(clearance(core, "C0001").at("status") == "Issued");

    const std::string bravo = c2.at("callsign").get<std::string>();
    CHECK(command(core, "reject", {{"id", "C0002"}}).status == 200);
    CHECK(clearance(core, "C0002").at("status") == "Rejected");
    CHECK(log_has(ep, "replan", "callsign", bravo));
    CHECK(log_has(ep, "console", "command", "reject"));
}

TEST_CASE("timeline range and seek rules") {
    Episode ep(load_scenario(fixture::scenario_path("headon")));
    GatewayCore live(ep);
    command(live, "step", {{"n", 3}});
    live.tick();
    live.tick();
    const auto index = live.timeline_index().body.at("frames");
    REQUIRE(index.size() >= 3);
    const double last = index.back().at("t").get<double>();
    CHECK(live.timeline(last).status == 200);
    CHECK(live.timeline(last + 1000.0).status == 416);
    CHECK(live.timeline(-1.0).status == 416);
    CHECK(command(live, "seek", {{"t", 0.0}}).status == 409);

    const auto done = run_episode(ep.scenario());
    GatewayCore replay(done.log);
    CHECK_FALSE(replay.live());
    CHECK(replay.paused());
    const auto frames = replay.timeline_index().body.at("frames");
    REQUIRE(frames.size() > 5);
    const double mid = frames[frames.size() / 2].at("t").get<double>();
    CHECK(command(replay, "seek", {{"t", mid}}).status == 200);
    CHECK(replay.snapshot().body.at("t").get<double>() == doctest::Approx(mid));
    CHECK(command(replay, "seek", {{"t", 1e9}}).status == 416);
    CHECK(command(replay, "approve", {{"id", "C0001"}}).status == 409);
    CHECK(replay.timeline(mid).body.at("t").get<double>() == doctest::Approx(mid));
}

TEST_CASE("injecting a reciprocal entrant produces a conflict next cycle") {
    Scenario sc = load_scenario(fixture::scenario_path("headon"));
    AircraftSpec bravo = sc.aircraft.at(1);
    sc.aircraft.resize(1);
    Episode ep(sc);
    GatewayCore core(ep);
    command(core, "step", {{"n", 1}});
    CHECK(core.tsr().body.at("latest").at("records").empty());

    Json bad = aircraft_to_json(bravo);
    bad["route"] = "NOWHERE";
    CHECK(command(core, "inject", {{"aircraft", bad}}).status == 400);
    CHECK(command(core, "inject", {{"aircraft", aircraft_to_json(bravo)}}).status == 200);
    CHECK(command(core, "inject", {{"aircraft", aircraft_to_json(bravo)}}).status == 400);
    command(core, "step", {{"n", 1}});
    const Json tsrs = core.tsr().body;
    const Json latest = tsrs.at("latest");
    bool pair_found = false;
    for (const auto& tsr : tsrs.at("history"))
        for (const auto& r : tsr.at("records")) pair_found = pair_found || r.at("ac2") == bravo.callsign;
    CHECK(pair_found);
    CHECK(latest.is_object());
    CHECK(log_has(ep, "console", "command", "inject"));
}

TEST_CASE("a terminated episode refuses control") {
    Episode ep(load_scenario(fixture::scenario_path("headon")));
    ep.run();
    GatewayCore core(ep);
    CHECK(core.finished());
    CHECK(command(core, "pause").status == 409);
    CHECK(command(core, "approve", {{"id", "C0001"}}).status == 409);
    CHECK(core.status().body.at("status") == "finished");
}

TEST_CASE("HTTP round trip and snapshot stream") {
    Episode ep(load_scenario(fixture::scenario_path("headon")));
    GatewayCore core(ep);
    command(core, "pause");
    GatewayServer server(core);
    const int port = server.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::atomic<bool> stop{false};
    std::thread driver([&] { core.run(stop, std::chrono::milliseconds(5)); });

    httplib::Client client("127.0.0.1", port);
    auto status = client.Get("/api/v1/status");
    REQUIRE(status);
    CHECK(status->status == 200);
    CHECK(Json::parse(status->body).at("mode") == "live");
    CHECK(status->get_header_value("Access-Control-Allow-Origin") == "*");

    auto missing = client.Get("/api/v1/aircraft/NOPE/plan");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(Json::parse(missing->body).contains("error"));

    auto beyond = client.Get("/api/v1/timeline/99999");
    REQUIRE(beyond);
    CHECK(beyond->status == 416);

    auto seek = client.Post("/api/v1/control", Json{{"command", "seek"}, {"t", 0}}.dump(), "application/json");
    REQUIRE(seek);
    CHECK(seek->status == 409);

    auto bad = client.Post("/api/v1/control", "not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    // Collect stream events while the episode runs.
    std::vector<double> times;
    std::thread resumer([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        httplib::Client c2("127.0.0.1", port);
        c2.Post("/api/v1/control", Json{{"command", "resume"}}.dump(), "application/json");
    });
    std::string buffer;
    httplib::Client streamer("127.0.0.1", port);
    streamer.set_read_timeout(10, 0);
    streamer.Get("/api/v1/stream", [&](const char* data, std::size_t len) {
        buffer.append(data, len);
        std::size_t end;
        while ((end = buffer.find("\n\n")) != std::string::npos) {
            const std::string event = buffer.substr(0, end);
            buffer.erase(0, end + 2);
            const auto at = event.find("data: ");
            if (at != std::string::npos) times.push_back(Json::parse(event.substr(at + 6)).at("t").get<double>());
        }
        return times.size() < 6;
    });
    resumer.join();
    REQUIRE(times.size() >= 6);
    for (std::size_t i = 1; i < times.size(); ++i) CHECK(times[i] >= times[i - 1]);
    CHECK(times.back() > times.front());

    stop = true;
    driver.join();
    server.stop();
}
