#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iftx/bundle.hpp"
#include "json.hpp"

namespace iftx {

enum class SessionStatus { AwaitingAnswer, Completed };

std::string status_name(SessionStatus s);

struct SessionView {
  std::string id;
  std::string agent;
  SessionStatus status = SessionStatus::Completed;
  std::optional<std::string> question;
  std::optional<SubtaskId> question_subtask;
  std::array<std::optional<int>, 4> prediction;
  std::vector<std::pair<std::string, std::string>> transcript;
};

struct SessionConfig {
  std::chrono::seconds ttl{30 * 60};
  // Human-evaluation cap on questions per subtask.
  std::size_t max_questions_per_subtask = 1;
  AgentKind default_agent = AgentKind::Hrl;
  std::function<std::chrono::steady_clock::time_point()> clock = [] { return std::chrono::steady_clock::now(); };
};

// Live clarification sessions over one immutable model bundle. Each session
// is guarded by its own mutex; the map itself by a store-wide one.
class SessionStore {
 public:
  SessionStore(const ModelBundle& bundle, SessionConfig config = {});

  // Throws ValidationError for a description without tokens or an agent the
  // bundle cannot run.
  SessionView create(const std::string& description, std::optional<AgentKind> agent = std::nullopt);
  // NotFoundError for unknown ids, ConflictError once completed,
  // ValidationError for an empty answer.
  SessionView answer(const std::string& id, const std::string& text);
  SessionView get(const std::string& id);

  std::size_t purge_expired();
  std::size_t size();

  const ModelBundle& bundle() const { return *bundle_; }
  // Prediction payload with channel and function names resolved.
  nlohmann::json prediction_json(const std::array<std::optional<int>, 4>& prediction) const;
  nlohmann::json view_json(const SessionView& view, bool with_transcript) const;

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    AgentKind agent = AgentKind::Hrl;
    std::unique_ptr<EpisodeRunner> runner;
    std::vector<std::pair<std::string, std::string>> transcript;
    std::optional<Event> pending;
    std::chrono::steady_clock::time_point last_used;
  };

  std::shared_ptr<Session> find(const std::string& id);
  SessionView view_of(const Session& s) const;
  void step(Session& s);
  std::string next_id();

  const ModelBundle* bundle_;
  SessionConfig config_;
  Environment env_;
  std::map<AgentKind, std::unique_ptr<Controller>> controllers_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
  Rng id_rng_;
};

}  // namespace iftx
