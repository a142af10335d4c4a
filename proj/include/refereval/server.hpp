#pragma once

// Live experiment sessions: round delivery, decision ingestion with server-side
// deadlines, auto-resolution, and export. State is event-sourced to one
// JSON-lines journal per session, so a restarted server recovers every session.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "refereval/error.hpp"
#include "refereval/microworld.hpp"

namespace httplib {
class Server;
}

namespace refereval {

// Milliseconds on the server's clock.
using Clock = std::function<std::int64_t()>;
Clock system_clock_ms();

struct ExperimentSetup {
  ExperimentConfig config;
  Schedule schedule;           // rounds every session of this experiment plays
  std::vector<Round> practice;  // prepended to every session
};

// Calibration configs build their own schedule; experiment2 configs need the
// schedule produced by build-experiment.
ExperimentSetup make_setup(const ExperimentConfig& config,
                           std::optional<Schedule> schedule = std::nullopt);

struct ServerOptions {
  std::filesystem::path journal_dir;  // empty: no persistence
  std::int64_t deadline_grace_ms = 0;
};

struct SessionState;

class SessionManager {
 public:
  explicit SessionManager(ServerOptions options, Clock clock = system_clock_ms());
  ~SessionManager();

  void add_experiment(const std::string& name, ExperimentSetup setup);

  // Replays every journal in the journal directory. Returns the number of
  // sessions restored.
  std::size_t recover();

  // {"config": name, "participant": optional} -> {"session_id", "total_rounds", ...}
  nlohmann::json create_session(const nlohmann::json& body);
  // Starts the next round, or returns {"complete": true} once all are played.
  nlohmann::json next_round(const std::string& session_id);
  // {"task_id", "label": "H0"|"H1", "client_ts"?} -> ack
  nlohmann::json post_decision(const std::string& session_id, int round_id,
                               const nlohmann::json& body);
  // Closes the active round, auto-resolving unlabelled tasks. Idempotent.
  nlohmann::json complete_round(const std::string& session_id, int round_id);
  // Decision events as JSON lines, in server-timestamp order.
  std::string export_log(const std::string& session_id);
  // Ground truth for analysis: the session's full schedule.
  nlohmann::json export_truth(const std::string& session_id);
  // Schema categories and the human decision tree, for the reference panel.
  nlohmann::json reference(const std::string& session_id);

  std::size_t session_count() const;

 private:
  std::shared_ptr<SessionState> find(const std::string& session_id) const;
  const ExperimentSetup& setup_of(const std::string& name) const;
  void apply(SessionState& s, const nlohmann::json& record, bool persist);

  ServerOptions options_;
  Clock clock_;
  std::map<std::string, ExperimentSetup> experiments_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<SessionState>> sessions_;
};

// HTTP status for a library error code.
int http_status_for(const std::string& code);

// Registers the session endpoints. Errors are returned as {code, message}.
void bind_routes(httplib::Server& server, SessionManager& sessions);

}  // namespace refereval
