#pragma once

// Operator gateway: read endpoints over immutable published state, a command
// queue applied between episode cycles, and an HTTP/SSE front end.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "skylane/runner.hpp"

namespace skylane {

inline constexpr const char* kGatewaySchema = "skylane.gateway/1";

struct GatewayResponse {
    int status = 200;
    Json body = Json::object();
};

class GatewayCore {
public:
    // Live mode: commands act on the episode, which this core drives.
    explicit GatewayCore(Episode& episode);
    // Replay mode: serves the frames of a recorded log.
    explicit GatewayCore(EventLog log);
    GatewayCore(const GatewayCore&) = delete;
    GatewayCore& operator=(const GatewayCore&) = delete;

    bool live() const { return episode_ != nullptr; }

    // Readers; safe from any thread.
    GatewayResponse snapshot() const;
    GatewayResponse status() const;
    GatewayResponse plan(const std::string& callsign) const;
    GatewayResponse tsr() const;
    GatewayResponse traces() const;
    GatewayResponse timeline_index() const;
    GatewayResponse timeline(double t) const;
    GatewayResponse clearances() const;

    // Blocks until a snapshot newer than `version` exists, the core closes or
    // the timeout passes. Returns the new version and snapshot.
    std::optional<std::pair<std::uint64_t, Json>> wait_update(std::uint64_t version,
                                                              std::chrono::milliseconds timeout) const;
    std::uint64_t version() const;

    // Queues a command (approve, modify, reject, pause, resume, step, seek,
    // inject); the future resolves once the episode thread applies it.
    std::future<GatewayResponse> submit(std::string command, Json args = Json::object());

    // Episode thread: applies queued commands, then runs one cycle (or one
    // replay frame) if not paused or a step is pending. Returns true if time
    // advanced.
    bool tick();
    // Episode thread: ticks until `stop`, sleeping `pace` after each advance.
    void run(const std::atomic<bool>& stop, std::chrono::milliseconds pace = std::chrono::milliseconds(0));
    // Wakes all waiters; later waits return immediately.
    void close();

    bool paused() const;
    bool finished() const;

private:
    struct Pending {
        std::string command;
        Json args;
        std::promise<GatewayResponse> done;
    };

    GatewayResponse apply(const std::string& command, const Json& args);
    void publish();
    void publish_replay();
    Json status_body() const;

    Episode* episode_ = nullptr;
    EventLog replay_log_;
    std::size_t replay_cursor_ = 0;

    // Episode-thread state.
    std::size_t log_cursor_ = 0;
    bool paused_flag_ = false;
    int step_budget_ = 0;

    std::mutex queue_mu_;
    std::deque<Pending> queue_;
    std::condition_variable queue_cv_;

    mutable std::shared_mutex mu_;
    mutable std::condition_variable_any cv_;
    Json snapshot_;
    Json clearances_;
    std::vector<Json> frames_;
    std::vector<Json> tsrs_;
    std::vector<Json> traces_;
    std::string mode_status_ = "running";
    std::uint64_t version_ = 0;
    bool paused_ = false;
    bool finished_ = false;
    bool closed_ = false;
    int exit_code_ = 0;
    std::string log_hash_;
    std::size_t log_size_ = 0;
};

// HTTP front end under /api/v1. Owns its listener thread.
class GatewayServer {
public:
    explicit GatewayServer(GatewayCore& core);
    ~GatewayServer();
    GatewayServer(const GatewayServer&) = delete;
    GatewayServer& operator=(const GatewayServer&) = delete;

    // Binds and starts listening. Throws std::runtime_error if the port is busy.
    // Port 0 picks a free port; the bound port is returned.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace skylane
