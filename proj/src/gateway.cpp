#include "skylane/gateway.hpp"

#include <algorithm>
#include <cmath>

#include "httplib.h"

namespace skylane {

namespace {

constexpr double kEps = 1e-9;

GatewayResponse error(int status, std::string message) { return {status, Json{{"error", std::move(message)}}}; }

GatewayResponse from_result(const CommandResult& r, Json ok_body) {
    switch (r.code) {
    case CommandResult::Code::Ok: return {200, std::move(ok_body)};
    case CommandResult::Code::NotFound: return error(404, r.message);
    case CommandResult::Code::Conflict: return error(409, r.message);
    default: return error(400, r.message);
    }
}

double record_t(const Json& rec) { return rec.at("t").get<double>(); }

}  // namespace

GatewayCore::GatewayCore(Episode& episode) : episode_(&episode) { publish(); }

GatewayCore::GatewayCore(EventLog log) : replay_log_(std::move(log)) {
    for (const auto& rec : replay_log_.records()) {
        const std::string type = rec.at("type").get<std::string>();
        if (type == "frame") frames_.push_back(rec);
        if (type == "tsr") tsrs_.push_back(rec);
        if (type == "resolution") traces_.push_back(rec);
    }
    for (const auto& rec : replay_log_.records()) {
        if (rec.at("type") == "end") exit_code_ = rec.value("exit_code", 0);
    }
    paused_flag_ = true;
    publish_replay();
}

bool GatewayCore::paused() const {
    std::shared_lock lock(mu_);
    return paused_;
}

bool GatewayCore::finished() const {
    std::shared_lock lock(mu_);
    return finished_;
}

std::uint64_t GatewayCore::version() const {
    std::shared_lock lock(mu_);
    return version_;
}

void GatewayCore::publish() {
    Episode& ep = *episode_;
    Json snap = ep.snapshot(paused_flag_ ? "paused" : "running");
    Json cl = Json::array();
    for (const auto& c : ep.clearances()) cl.push_back(clearance_to_json(c));
    std::vector<Json> frames, tsrs, traces;
    const auto& recs = ep.log().records();
    for (; log_cursor_ < recs.size(); ++log_cursor_) {
        const Json& rec = recs[log_cursor_];
        const std::string type = rec.at("type").get<std::string>();
        if (type == "frame") frames.push_back(rec);
        if (type == "tsr") tsrs.push_back(rec);
        if (type == "resolution") traces.push_back(rec);
    }
    {
        std::unique_lock lock(mu_);
        snapshot_ = std::move(snap);
        clearances_ = std::move(cl);
        for (auto& f : frames) frames_.push_back(std::move(f));
        for (auto& t : tsrs) tsrs_.push_back(std::move(t));
        for (auto& t : traces) traces_.push_back(std::move(t));
        paused_ = paused_flag_;
        finished_ = ep.finished();
        mode_status_ = finished_ ? "finished" : (paused_ ? "paused" : "running");
        exit_code_ = ep.exit_code();
        log_hash_ = ep.log().hash_hex();
        log_size_ = recs.size();
        ++version_;
    }
    cv_.notify_all();
}

void GatewayCore::publish_replay() {
    Json snap;
    if (!frames_.empty()) {
        const Json& frame = frames_[replay_cursor_];
        const auto upto = frame.at("seq").get<std::size_t>();
        Json plans = Json::object();
        Json constraints = Json::array();
        Json alerts = Json::array();
        for (std::size_t i = 0; i <= upto && i < replay_log_.records().size(); ++i) {
            const Json& rec = replay_log_.records()[i];
            const std::string type = rec.at("type").get<std::string>();
            if (type == "plan" || type == "replan") {
                if (rec.contains("plan")) plans[rec.at("callsign").get<std::string>()] = rec.at("plan");
            } else if (type == "plan_revision") {
                plans = rec.at("plan").at("plans");
                constraints = rec.at("plan").at("constraints");
            } else if (type == "constraints") {
                constraints = rec.at("in_force");
            } else if (type == "alert") {
                alerts.push_back(rec);
            }
        }
        snap = Json{{"schema", "skylane.snapshot/1"},
                    {"t", frame.at("t")},
                    {"status", replay_cursor_ + 1 == frames_.size() ? "finished" : "replay"},
                    {"revision", frame.at("revision")},
                    {"aircraft", frame.at("aircraft")},
                    {"plan", {{"revision", frame.at("revision")}, {"plans", plans}, {"constraints", constraints}}},
                    {"pending_clearances", Json::array()},
                    {"alerts", alerts},
                    {"log_hash", replay_log_.hash_hex()},
                    {"log_size", replay_log_.records().size()}};
    } else {
        snap = Json{{"schema", "skylane.snapshot/1"}, {"t", 0.0}, {"status", "finished"}, {"aircraft", Json::array()}};
    }
    Json cl = Json::array();
    for (const auto& rec : replay_log_.records()) {
        if (rec.at("type") == "clearance" && (frames_.empty() || record_t(rec) <= record_t(snap) + kEps)) cl.push_back(rec);
    }
    {
        std::unique_lock lock(mu_);
        snapshot_ = std::move(snap);
        clearances_ = std::move(cl);
        paused_ = paused_flag_;
        finished_ = frames_.empty() || replay_cursor_ + 1 == frames_.size();
        mode_status_ = finished_ ? "finished" : (paused_ ? "paused" : "replay");
        log_hash_ = replay_log_.hash_hex();
        log_size_ = replay_log_.records().size();
        ++version_;
    }
    cv_.notify_all();
}

Json GatewayCore::status_body() const {
    return Json{{"schema", kGatewaySchema},
                {"mode", live() ? "live" : "replay"},
                {"status", mode_status_},
                {"t", snapshot_.value("t", 0.0)},
                {"revision", snapshot_.value("revision", 0)},
                {"paused", paused_},
                {"finished", finished_},
                {"exit_code", exit_code_},
                {"log_hash", log_hash_},
                {"log_size", log_size_},
                {"version", version_}};
}

GatewayResponse GatewayCore::snapshot() const {
    std::shared_lock lock(mu_);
    return {200, snapshot_};
}

GatewayResponse GatewayCore::status() const {
    std::shared_lock lock(mu_);
    return {200, status_body()};
}

GatewayResponse GatewayCore::plan(const std::string& callsign) const {
    std::shared_lock lock(mu_);
    const Json* plans = nullptr;
    if (snapshot_.contains("plan") && snapshot_.at("plan").contains("plans")) plans = &snapshot_.at("plan").at("plans");
    if (!plans || !plans->contains(callsign)) return error(404, "unknown aircraft " + callsign);
    Json cons = Json::array();
    for (const auto& c : snapshot_.at("plan").value("constraints", Json::array())) {
        if (c.at("callsign") == callsign) cons.push_back(c);
    }
    Json cl = Json::array();
    for (const auto& c : clearances_) {
        if (c.at("callsign") == callsign) cl.push_back(c);
    }
    Json state = nullptr;
    for (const auto& a : snapshot_.at("aircraft")) {
        if (a.at("callsign") == callsign) state = a;
    }
    return {200, Json{{"callsign", callsign},
                      {"t", snapshot_.at("t")},
                      {"revision", snapshot_.value("revision", 0)},
                      {"plan", plans->at(callsign)},
                      {"constraints", cons},
                      {"clearances", cl},
                      {"state", state}}};
}

GatewayResponse GatewayCore::tsr() const {
    std::shared_lock lock(mu_);
    Json history = Json::array();
    for (const auto& t : tsrs_) {
        if (!t.at("records").empty()) history.push_back(t);
    }
    return {200, Json{{"latest", tsrs_.empty() ? Json(nullptr) : tsrs_.back()}, {"history", history}}};
}

GatewayResponse GatewayCore::traces() const {
    std::shared_lock lock(mu_);
    return {200, Json{{"traces", traces_}}};
}

GatewayResponse GatewayCore::timeline_index() const {
    std::shared_lock lock(mu_);
    Json index = Json::array();
    for (const auto& f : frames_) index.push_back({{"t", f.at("t")}, {"seq", f.at("seq")}, {"revision", f.at("revision")}});
    return {200, Json{{"frames", index}}};
}

GatewayResponse GatewayCore::timeline(double t) const {
    std::shared_lock lock(mu_);
    if (frames_.empty()) return error(416, "no frames recorded yet");
    const double first = record_t(frames_.front()), last = record_t(frames_.back());
    if (!std::isfinite(t) || t < first - kEps || t > last + kEps) {
        return error(416, "t=" + std::to_string(t) + " outside recorded range [" + std::to_string(first) + ", " +
                              std::to_string(last) + "]");
    }
    auto it = std::upper_bound(frames_.begin(), frames_.end(), t + kEps,
                               [](double v, const Json& f) { return v < record_t(f); });
    Json frame = *std::prev(it);
    Json resolutions = Json::array();
    for (const auto& r : traces_) {
        if (std::abs(record_t(r) - record_t(frame)) > kEps) continue;
        resolutions.push_back({{"seq", r.at("seq")},
                               {"outcome", r.at("outcome")},
                               {"applied", r.at("applied")},
                               {"conflict", r.at("conflict")}});
    }
    frame["resolutions"] = resolutions;
    return {200, frame};
}

GatewayResponse GatewayCore::clearances() const {
    std::shared_lock lock(mu_);
    return {200, Json{{"clearances", clearances_}}};
}

std::optional<std::pair<std::uint64_t, Json>> GatewayCore::wait_update(std::uint64_t version,
                                                                       std::chrono::milliseconds timeout) const {
    std::shared_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return version_ > version || closed_; });
    if (version_ <= version) return std::nullopt;
    return std::make_pair(version_, snapshot_);
}

std::future<GatewayResponse> GatewayCore::submit(std::string command, Json args) {
    Pending p{std::move(command), std::move(args), {}};
    auto fut = p.done.get_future();
    {
        std::lock_guard lock(queue_mu_);
        queue_.push_back(std::move(p));
    }
    queue_cv_.notify_all();
    return fut;
}

GatewayResponse GatewayCore::apply(const std::string& command, const Json& args) {
    const bool is_control = command == "pause" || command == "resume" || command == "step" || command == "seek";
    if (command == "pause") {
        paused_flag_ = true;
        step_budget_ = 0;
    } else if (command == "resume") {
        paused_flag_ = false;
        step_budget_ = 0;
    } else if (command == "step") {
        const Json n = args.value("n", Json(1));
        if (!n.is_number_integer() || n.get<int>() < 1) return error(400, "step needs an integer n >= 1");
        paused_flag_ = true;
        step_budget_ += n.get<int>();
    } else if (command == "seek") {
        if (live()) return error(409, "seek is only available in replay");
        if (!args.contains("t") || !args.at("t").is_number()) return error(400, "seek needs a numeric t");
        const double t = args.at("t").get<double>();
        if (frames_.empty() || t < record_t(frames_.front()) - kEps || t > record_t(frames_.back()) + kEps) {
            return error(416, "seek target outside the recorded range");
        }
        std::size_t k = 0;
        while (k + 1 < frames_.size() && record_t(frames_[k + 1]) <= t + kEps) ++k;
        replay_cursor_ = k;
        paused_flag_ = true;
        step_budget_ = 0;
    }
    if (is_control) {
        if (live()) {
            if (episode_->finished()) return error(409, "episode terminated");
            episode_->note_console(command, args);
        }
        return {200, Json{{"ack", true}, {"command", command}}};
    }

    if (!live()) return error(409, command + " is not available in replay");
    Episode& ep = *episode_;
    auto id_of = [&]() -> std::optional<std::string> {
        if (!args.contains("id") || !args.at("id").is_string()) return std::nullopt;
        return args.at("id").get<std::string>();
    };
    if (command == "approve" || command == "reject") {
        const auto id = id_of();
        if (!id) return error(400, command + " needs a clearance id");
        const auto r = command == "approve" ? ep.approve(*id) : ep.reject(*id);
        return from_result(r, {{"ack", true}, {"id", *id}, {"status", command == "approve" ? "Approved" : "Rejected"}});
    }
    if (command == "modify") {
        const auto id = id_of();
        if (!id) return error(400, "modify needs a clearance id");
        if (!args.contains("action")) return error(400, "modify needs a replacement action");
        Action a;
        try {
            a = args.at("action").get<Action>();
        } catch (const std::exception& e) {
            return error(400, std::string("bad action: ") + e.what());
        }
        return from_result(ep.modify(*id, a), {{"ack", true}, {"id", *id}, {"status", "Approved"}});
    }
    if (command == "inject") {
        if (!args.contains("aircraft")) return error(400, "inject needs an aircraft");
        AircraftSpec spec;
        try {
            spec = parse_aircraft(args.at("aircraft"), "/aircraft");
        } catch (const ScenarioError& e) {
            return error(400, e.what());
        }
        return from_result(ep.inject(spec), {{"ack", true}, {"callsign", spec.callsign}});
    }
    return error(400, "unknown command '" + command + "'");
}

bool GatewayCore::tick() {
    std::deque<Pending> batch;
    {
        std::lock_guard lock(queue_mu_);
        batch.swap(queue_);
    }
    for (auto& p : batch) {
        GatewayResponse r;
        try {
            r = apply(p.command, p.args);
        } catch (const std::exception& e) {
            r = error(500, e.what());
        }
        p.done.set_value(std::move(r));
    }

    bool advanced = false;
    if (live()) {
        if (!episode_->finished() && (!paused_flag_ || step_budget_ > 0)) {
            episode_->run_cycle();
            if (step_budget_ > 0) --step_budget_;
            advanced = true;
        }
    } else if (!frames_.empty() && replay_cursor_ + 1 < frames_.size() && (!paused_flag_ || step_budget_ > 0)) {
        ++replay_cursor_;
        if (step_budget_ > 0) --step_budget_;
        advanced = true;
    }
    if (advanced || !batch.empty()) {
        if (live()) {
            publish();
        } else {
            publish_replay();
        }
    }
    return advanced;
}

void GatewayCore::run(const std::atomic<bool>& stop, std::chrono::milliseconds pace) {
    while (!stop.load()) {
        if (tick()) {
            if (pace.count() > 0) std::this_thread::sleep_for(pace);
            continue;
        }
        std::unique_lock lock(queue_mu_);
        queue_cv_.wait_for(lock, std::chrono::milliseconds(50), [&] { return !queue_.empty() || stop.load(); });
    }
}

void GatewayCore::close() {
    {
        std::unique_lock lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

// ---------------------------------------------------------------------------
// HTTP

struct GatewayServer::Impl {
    GatewayCore& core;
    httplib::Server server;
    std::thread listener;
    std::atomic<bool> stopping{false};

    explicit Impl(GatewayCore& c) : core(c) {}

    static void send(httplib::Response& res, const GatewayResponse& r) {
        res.status = r.status;
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_content(r.body.dump(), "application/json");
    }

    void command(httplib::Response& res, std::string name, Json args) {
        auto fut = core.submit(std::move(name), std::move(args));
        if (fut.wait_for(std::chrono::seconds(30)) != std::future_status::ready) {
            send(res, {503, Json{{"error", "episode loop did not apply the command in time"}}});
            return;
        }
        send(res, fut.get());
    }

    static std::optional<Json> body_json(const httplib::Request& req, httplib::Response& res) {
        if (req.body.empty()) return Json::object();
        try {
            Json j = Json::parse(req.body);
            if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
            return j;
        } catch (const std::exception& e) {
            send(res, {400, Json{{"error", std::string("bad request body: ") + e.what()}}});
            return std::nullopt;
        }
    }

    void routes() {
        auto& s = server;
        s.Get("/api/v1/snapshot", [this](const httplib::Request&, httplib::Response& res) { send(res, core.snapshot()); });
        s.Get("/api/v1/status", [this](const httplib::Request&, httplib::Response& res) { send(res, core.status()); });
        s.Get("/api/v1/tsr", [this](const httplib::Request&, httplib::Response& res) { send(res, core.tsr()); });
        s.Get("/api/v1/traces", [this](const httplib::Request&, httplib::Response& res) { send(res, core.traces()); });
        s.Get("/api/v1/clearances", [this](const httplib::Request&, httplib::Response& res) { send(res, core.clearances()); });
        s.Get("/api/v1/timeline", [this](const httplib::Request&, httplib::Response& res) { send(res, core.timeline_index()); });
        s.Get(R"(/api/v1/timeline/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            double t = 0.0;
            try {
                std::size_t used = 0;
                t = std::stod(req.matches[1].str(), &used);
                if (used != req.matches[1].str().size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                send(res, {400, Json{{"error", "time index must be a number"}}});
                return;
            }
            send(res, core.timeline(t));
        });
        s.Get(R"(/api/v1/aircraft/([^/]+)/plan)", [this](const httplib::Request& req, httplib::Response& res) {
            send(res, core.plan(req.matches[1].str()));
        });
        s.Post(R"(/api/v1/clearances/([^/]+)/(approve|modify|reject))",
               [this](const httplib::Request& req, httplib::Response& res) {
                   auto body = body_json(req, res);
                   if (!body) return;
                   (*body)["id"] = req.matches[1].str();
                   command(res, req.matches[2].str(), std::move(*body));
               });
        s.Post("/api/v1/control", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = body_json(req, res);
            if (!body) return;
            if (!body->contains("command") || !body->at("command").is_string()) {
                send(res, {400, Json{{"error", "control needs a command"}}});
                return;
            }
            const std::string name = body->at("command").get<std::string>();
            body->erase("command");
            command(res, name, std::move(*body));
        });
        s.Get("/api/v1/stream", [this](const httplib::Request&, httplib::Response& res) {
            res.set_header("Cache-Control", "no-cache");
            res.set_header("Access-Control-Allow-Origin", "*");
            auto last = std::make_shared<std::uint64_t>(0);
            res.set_chunked_content_provider("text/event-stream", [this, last](std::size_t, httplib::DataSink& sink) {
                if (stopping.load()) {
                    sink.done();
                    return true;
                }
                auto update = core.wait_update(*last, std::chrono::milliseconds(500));
                if (!update) return sink.is_writable();
                *last = update->first;
                const std::string msg =
                    "event: snapshot\nid: " + std::to_string(update->first) + "\ndata: " + update->second.dump() + "\n\n";
                return sink.write(msg.data(), msg.size());
            });
        });
        s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) send(res, {res.status, Json{{"error", "not found"}}});
        });
    }
};

GatewayServer::GatewayServer(GatewayCore& core) : impl_(std::make_unique<Impl>(core)) { impl_->routes(); }

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) throw std::runtime_error("gateway: cannot bind to " + host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error("gateway: port " + std::to_string(port) + " is busy or unavailable");
    }
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    return bound;
}

void GatewayServer::stop() {
    if (!impl_) return;
    impl_->stopping = true;
    impl_->core.close();
    impl_->server.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

}  // namespace skylane
