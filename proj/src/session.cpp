#include "iftx/session.hpp"

#include <random>

namespace iftx {

std::string status_name(SessionStatus s) {
  return s == SessionStatus::AwaitingAnswer ? "awaiting_answer" : "completed";
}

SessionStore::SessionStore(const ModelBundle& bundle, SessionConfig config)
    : bundle_(&bundle),
      config_(std::move(config)),
      env_(bundle.ontology, bundle.rewards),
      id_rng_(std::random_device{}()) {
  for (auto kind : {AgentKind::Lam, AgentKind::LamRule, AgentKind::LamSup, AgentKind::HrlFixedOrder, AgentKind::Hrl})
    if (has_agent(bundle, kind)) controllers_[kind] = make_controller(bundle, kind);
}

std::string SessionStore::next_id() {
  return hex64(id_rng_.next() ^ splitmix64(++counter_));
}

void SessionStore::step(Session& s) {
  auto ev = s.runner->advance();
  if (ev.kind == EventKind::Question) {
    s.transcript.emplace_back("agent", ev.question);
    s.pending = ev;
  } else {
    s.pending.reset();
  }
}

SessionView SessionStore::view_of(const Session& s) const {
  SessionView v;
  v.id = s.id;
  v.agent = std::string(agent_name(s.agent));
  v.status = s.pending ? SessionStatus::AwaitingAnswer : SessionStatus::Completed;
  if (s.pending) {
    v.question = s.pending->question;
    v.question_subtask = s.pending->subtask;
  }
  v.prediction = s.runner->state().predictions;
  v.transcript = s.transcript;
  return v;
}

SessionView SessionStore::create(const std::string& description, std::optional<AgentKind> agent) {
  const auto tokens = tokenize(description);
  if (tokens.empty()) throw ValidationError("description must contain at least one word");
  const auto kind = agent.value_or(config_.default_agent);
  const auto it = controllers_.find(kind);
  if (it == controllers_.end())
    throw ValidationError("agent " + std::string(agent_name(kind)) + " is not available in this checkpoint");

  auto s = std::make_shared<Session>();
  s->agent = kind;
  EpisodeOptions opts;
  opts.max_questions_per_subtask = config_.max_questions_per_subtask;
  s->runner = std::make_unique<EpisodeRunner>(env_, *it->second, tokens, std::nullopt, Rng(0), opts);
  s->transcript.emplace_back("user", description);
  s->last_used = config_.clock();
  step(*s);
  {
    std::lock_guard lock(mutex_);
    s->id = next_id();
    sessions_[s->id] = s;
  }
  return view_of(*s);
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  if (config_.clock() - it->second->last_used > config_.ttl) {
    sessions_.erase(it);
    throw NotFoundError("session " + id + " has expired");
  }
  return it->second;
}

SessionView SessionStore::answer(const std::string& id, const std::string& text) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (!s->pending) throw ConflictError("session " + id + " is already completed");
  auto tokens = tokenize(text);
  if (tokens.empty()) throw ValidationError("answer must contain at least one word");
  s->transcript.emplace_back("user", text);
  s->runner->answer(std::move(tokens));
  s->last_used = config_.clock();
  step(*s);
  return view_of(*s);
}

SessionView SessionStore::get(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  s->last_used = config_.clock();
  return view_of(*s);
}

std::size_t SessionStore::purge_expired() {
  std::lock_guard lock(mutex_);
  const auto now = config_.clock();
  std::size_t n = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second->last_used > config_.ttl) {
      it = sessions_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

std::size_t SessionStore::size() {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

nlohmann::json SessionStore::prediction_json(const std::array<std::optional<int>, 4>& p) const {
  const auto& onto = bundle_->ontology;
  static const char* const keys[] = {"trigger_channel", "trigger_function", "action_channel", "action_function"};
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < 4; ++i) {
    if (!p[i]) {
      j[keys[i]] = nullptr;
      continue;
    }
    const auto& name = is_channel_subtask(subtask_at(i)) ? onto.channel(*p[i]).name : onto.function(*p[i]).name;
    j[keys[i]] = {{"id", *p[i]}, {"name", name}};
  }
  return j;
}

nlohmann::json SessionStore::view_json(const SessionView& v, bool with_transcript) const {
  nlohmann::json j{{"session_id", v.id}, {"agent", v.agent}, {"status", status_name(v.status)}};
  if (v.question) {
    j["question"] = *v.question;
    j["subtask"] = std::string(short_name(*v.question_subtask));
  }
  if (v.status == SessionStatus::Completed) j["prediction"] = prediction_json(v.prediction);
  if (with_transcript) {
    auto t = nlohmann::json::array();
    for (const auto& [who, text] : v.transcript) t.push_back({{"speaker", who}, {"text", text}});
    j["transcript"] = t;
  }
  return j;
}

}  // namespace iftx
