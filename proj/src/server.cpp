#include "refereval/server.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace refereval {

using nlohmann::json;

Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

ExperimentSetup make_setup(const ExperimentConfig& config, std::optional<Schedule> schedule) {
  ExperimentSetup setup;
  setup.config = config;
  if (schedule) {
    setup.schedule = std::move(*schedule);
  } else if (config.mode == "calibration") {
    Engine rng = make_stream(config.seed, {stream::kTasks});
    setup.schedule = build_calibration(config, rng);
  } else {
    throw DomainError("config", "experiment '" + config.name +
                                    "' needs a schedule built by build-experiment");
  }
  Engine practice_rng = make_stream(config.seed, {stream::kTasks, 2});
  setup.practice = build_practice(config, practice_rng);
  return setup;
}

struct SessionState {
  std::mutex mutex;
  std::string id;
  std::string config;
  std::string participant;
  const ExperimentSetup* setup = nullptr;
  std::vector<const Round*> rounds;  // practice rounds, then the schedule
  std::size_t next = 0;
  std::optional<std::size_t> active;
  std::int64_t start_ms = 0;
  std::int64_t deadline_ms = 0;
  std::set<int> labelled;
  std::map<int, json> closed;  // round_id -> close summary
  std::vector<DecisionEvent> events;
  std::int64_t last_ts = 0;
  std::ofstream journal;

  const Round& active_round() const { return *rounds[*active]; }
};

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string new_session_id() {
  static std::mutex m;
  static std::random_device device;
  std::lock_guard lock(m);
  std::ostringstream ss;
  ss << std::hex;
  for (int i = 0; i < 4; ++i) ss << std::setw(8) << std::setfill('0') << device();
  return ss.str();
}

}  // namespace

SessionManager::SessionManager(ServerOptions options, Clock clock)
    : options_(std::move(options)), clock_(std::move(clock)) {
  if (!options_.journal_dir.empty()) std::filesystem::create_directories(options_.journal_dir);
}

SessionManager::~SessionManager() = default;

void SessionManager::add_experiment(const std::string& name, ExperimentSetup setup) {
  experiments_.insert_or_assign(name, std::move(setup));
}

const ExperimentSetup& SessionManager::setup_of(const std::string& name) const {
  const auto it = experiments_.find(name);
  if (it == experiments_.end()) throw DomainError("unknown_config", "no experiment named '" + name + "'");
  return it->second;
}

std::shared_ptr<SessionState> SessionManager::find(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw DomainError("unknown_session", "no session '" + session_id + "'");
  return it->second;
}

std::size_t SessionManager::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

// Every state change goes through here, both live and during recovery.
void SessionManager::apply(SessionState& s, const json& record, bool persist) {
  const auto type = record.at("type").get<std::string>();
  if (type == "session") {
    s.id = record.at("session_id").get<std::string>();
    s.config = record.at("config").get<std::string>();
    s.participant = record.value("participant", std::string{});
    s.setup = &setup_of(s.config);
    for (const Round& r : s.setup->practice) s.rounds.push_back(&r);
    for (const Round& r : s.setup->schedule.rounds) s.rounds.push_back(&r);
  } else if (type == "round_start") {
    s.active = record.at("index").get<std::size_t>();
    s.next = *s.active + 1;
    s.start_ms = record.at("start_ms").get<std::int64_t>();
    s.deadline_ms = record.at("deadline_ms").get<std::int64_t>();
    s.labelled.clear();
    s.last_ts = std::max(s.last_ts, s.start_ms);
  } else if (type == "decision") {
    DecisionEvent e = event_from_json(record.at("event"));
    s.labelled.insert(e.task_id);
    s.last_ts = std::max(s.last_ts, e.timestamp_ms);
    s.events.push_back(std::move(e));
  } else if (type == "round_close") {
    s.closed[record.at("round_id").get<int>()] = record.at("summary");
    s.last_ts = std::max(s.last_ts, record.at("summary").at("closed_ms").get<std::int64_t>());
    s.active.reset();
  } else {
    throw DomainError("journal", "unknown journal record '" + type + "'");
  }
  if (persist && s.journal.is_open()) {
    s.journal << record.dump() << '\n';
    s.journal.flush();
    if (!s.journal) throw IoError("journal write failed for session '" + s.id + "'");
  }
}

std::size_t SessionManager::recover() {
  if (options_.journal_dir.empty()) return 0;
  std::size_t restored = 0;
  for (const auto& entry : std::filesystem::directory_iterator(options_.journal_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    std::ifstream in(entry.path());
    auto state = std::make_shared<SessionState>();
    std::string line;
    std::size_t line_no = 0;
    try {
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record;
        try {
          record = json::parse(line);
        } catch (const json::exception&) {
          // a crash can leave a torn final record
          if (in.peek() == EOF) break;
          throw;
        }
        apply(*state, record, false);
      }
    } catch (const std::exception& e) {
      spdlog::warn("skipping journal {} (line {}): {}", entry.path().string(), line_no, e.what());
      continue;
    }
    if (state->id.empty()) continue;
    state->journal.open(entry.path(), std::ios::app);
    std::unique_lock lock(sessions_mutex_);
    sessions_[state->id] = std::move(state);
    ++restored;
  }
  return restored;
}

json SessionManager::create_session(const json& body) {
  if (!body.is_object() || !body.contains("config") || !body.at("config").is_string()) {
    throw DomainError("bad_request", "body must be {\"config\": name}");
  }
  const auto name = body.at("config").get<std::string>();
  setup_of(name);
  auto state = std::make_shared<SessionState>();
  const std::string id = new_session_id();
  if (!options_.journal_dir.empty()) {
    state->journal.open(options_.journal_dir / (id + ".jsonl"), std::ios::app);
    if (!state->journal) throw IoError("cannot open journal for session '" + id + "'");
  }
  apply(*state,
        {{"type", "session"},
         {"session_id", id},
         {"config", name},
         {"participant", body.value("participant", std::string{})},
         {"created_ms", clock_()}},
        true);
  const std::size_t practice = state->setup->practice.size();
  const std::size_t total = state->rounds.size();
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[id] = std::move(state);
  }
  return {{"session_id", id}, {"total_rounds", total}, {"practice_rounds", practice}};
}

json SessionManager::next_round(const std::string& session_id) {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  if (s->active) {
    throw DomainError("round_active", "round " + std::to_string(s->active_round().round_id) +
                                          " has not been completed");
  }
  if (s->next >= s->rounds.size()) {
    return {{"complete", true}, {"total_rounds", s->rounds.size()}};
  }
  const Round& r = *s->rounds[s->next];
  const std::int64_t now = std::max(clock_(), s->last_ts);
  const auto duration_ms = static_cast<std::int64_t>(r.duration_s * 1000.0);
  apply(*s,
        {{"type", "round_start"},
         {"index", s->next},
         {"round_id", r.round_id},
         {"start_ms", now},
         {"deadline_ms", now + duration_ms}},
        true);
  json tasks = json::array();
  for (const MicroworldTask& t : r.tasks) {
    tasks.push_back({{"task_id", t.task_id},
                     {"attributes", attributes_to_json(s->setup->config.world.schema, t.attributes)}});
  }
  return {{"complete", false},
          {"round_id", r.round_id},
          {"index", *s->active},
          {"total_rounds", s->rounds.size()},
          {"practice", r.practice()},
          {"duration_s", r.duration_s},
          {"remaining_s", r.duration_s},
          {"tasks", tasks}};
}

json SessionManager::post_decision(const std::string& session_id, int round_id, const json& body) {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  const std::int64_t now = std::max(clock_(), s->last_ts);
  if (!s->active || s->active_round().round_id != round_id) {
    throw DomainError("round_not_active", "round " + std::to_string(round_id) + " is not active");
  }
  if (!body.is_object() || !body.contains("task_id") || !body.at("task_id").is_number_integer() ||
      !body.contains("label") || !body.at("label").is_string()) {
    throw DomainError("bad_request", "body must be {\"task_id\": int, \"label\": \"H0\"|\"H1\"}");
  }
  const int task_id = body.at("task_id").get<int>();
  const Round& r = s->active_round();
  if (std::none_of(r.tasks.begin(), r.tasks.end(),
                   [&](const MicroworldTask& t) { return t.task_id == task_id; })) {
    throw DomainError("unknown_task", "task " + std::to_string(task_id) + " is not in round " +
                                          std::to_string(round_id));
  }
  Hypothesis label;
  try {
    label = hypothesis_from_string(body.at("label").get<std::string>());
  } catch (const DomainError&) {
    throw DomainError("bad_label", "label must be H0 or H1");
  }
  if (now > s->deadline_ms + options_.deadline_grace_ms) {
    throw DomainError("deadline", "round " + std::to_string(round_id) + " closed at " +
                                      std::to_string(s->deadline_ms));
  }
  if (s->labelled.count(task_id)) {
    throw DomainError("duplicate", "task " + std::to_string(task_id) + " is already labelled");
  }
  DecisionEvent e;
  e.timestamp_ms = now;
  e.session_id = s->id;
  e.participant = s->participant;
  e.round_id = round_id;
  e.task_id = task_id;
  e.decision = label;
  e.source = EventSource::kHuman;
  e.practice = r.practice();
  if (body.contains("client_ts") && body.at("client_ts").is_number()) {
    e.client_ts = body.at("client_ts").get<std::int64_t>();
  }
  apply(*s, {{"type", "decision"}, {"event", event_to_json(e)}}, true);
  return {{"ack", true}, {"task_id", task_id}, {"timestamp_ms", now}};
}

json SessionManager::complete_round(const std::string& session_id, int round_id) {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  if (const auto it = s->closed.find(round_id); it != s->closed.end()) return it->second;
  if (!s->active || s->active_round().round_id != round_id) {
    throw DomainError("round_not_active", "round " + std::to_string(round_id) + " is not active");
  }
  const Round& r = s->active_round();
  // The round ends now or at its deadline, whichever is earlier; unlabelled
  // tasks are resolved at that instant.
  const std::int64_t now = std::max(clock_(), s->last_ts);
  const std::int64_t closed_ms = std::max(std::min(now, s->deadline_ms), s->last_ts);
  std::vector<DecisionEvent> in_round;
  for (const DecisionEvent& e : s->events) {
    if (e.round_id == round_id) in_round.push_back(e);
  }
  Engine rng = make_stream(s->setup->config.seed,
                           {stream::kAutoResolve, fnv1a(s->id), static_cast<std::uint64_t>(round_id)});
  const auto resolved = resolve_unclassified(r, in_round, s->id, s->participant, closed_ms, rng);
  for (const DecisionEvent& e : resolved) {
    apply(*s, {{"type", "decision"}, {"event", event_to_json(e)}}, true);
  }
  const json summary = {{"round_id", round_id},
                        {"closed", true},
                        {"assigned", r.tasks.size()},
                        {"human_decisions", in_round.size()},
                        {"auto_resolved", resolved.size()},
                        {"closed_ms", closed_ms},
                        {"remaining_rounds", s->rounds.size() - s->next}};
  apply(*s, {{"type", "round_close"}, {"round_id", round_id}, {"summary", summary}}, true);
  return summary;
}

std::string SessionManager::export_log(const std::string& session_id) {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  SessionLog log{s->id, s->participant, s->events};
  return session_log_to_jsonl(log);
}

json SessionManager::export_truth(const std::string& session_id) {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  Schedule truth = s->setup->schedule;
  truth.rounds.clear();
  for (const Round* r : s->rounds) truth.rounds.push_back(*r);
  return schedule_to_json(truth, s->setup->config.world.schema);
}

json SessionManager::reference(const std::string& session_id) {
  auto s = find(session_id);
  const Microworld& world = s->setup->config.world;
  json attributes = json::array();
  for (const AttributeSpec& a : world.schema.attributes()) {
    json j = {{"name", a.name},
              {"kind", a.kind == AttributeKind::kContinuous ? "continuous" : "categorical"}};
    if (a.kind == AttributeKind::kCategorical) j["categories"] = a.categories;
    attributes.push_back(j);
  }
  return {{"attributes", attributes}, {"human_tree", world.human_tree.to_json(world.schema)}};
}

int http_status_for(const std::string& code) {
  if (code == "unknown_session" || code == "unknown_config") return 404;
  if (code == "deadline" || code == "duplicate" || code == "round_active" ||
      code == "round_not_active")
    return 409;
  if (code == "io") return 500;
  return 400;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_json(res, http_status_for(e.code()), {{"code", e.code()}, {"message", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"code", "bad_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      spdlog::error("request {} {} failed: {}", req.method, req.path, e.what());
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw DomainError("bad_request", std::string("body is not JSON: ") + e.what());
  }
}

}  // namespace

void bind_routes(httplib::Server& server, SessionManager& sessions) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.Post("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 201, sessions.create_session(parse_body(req)));
              }));
  server.Get(R"(/sessions/([^/]+)/rounds/next)",
             guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.next_round(req.matches[1]));
             }));
  server.Post(R"(/sessions/([^/]+)/rounds/(\d+)/decisions)",
              guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200,
                          sessions.post_decision(req.matches[1], std::stoi(req.matches[2]),
                                                 parse_body(req)));
              }));
  server.Post(R"(/sessions/([^/]+)/rounds/(\d+)/complete)",
              guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, sessions.complete_round(req.matches[1], std::stoi(req.matches[2])));
              }));
  server.Get(R"(/sessions/([^/]+)/export)",
             guarded([&](const httplib::Request& req, httplib::Response& res) {
               if (req.get_param_value("part") == "truth") {
                 send_json(res, 200, sessions.export_truth(req.matches[1]));
               } else {
                 res.status = 200;
                 res.set_content(sessions.export_log(req.matches[1]), "application/x-ndjson");
               }
             }));
  server.Get(R"(/sessions/([^/]+)/reference)",
             guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, sessions.reference(req.matches[1]));
             }));
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });
}

}  // namespace refereval
