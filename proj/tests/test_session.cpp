#include <set>
#include <thread>

#include "doctest.h"
#include "iftx/session.hpp"
#include "support.hpp"

using namespace iftx;
using namespace iftx::testing;

namespace {

struct FakeClock {
  std::shared_ptr<std::chrono::steady_clock::time_point> now =
      std::make_shared<std::chrono::steady_clock::time_point>();
  void advance(std::chrono::seconds s) { *now += s; }
  std::function<std::chrono::steady_clock::time_point()> fn() const {
    auto p = now;
    return [p] { return *p; };
  }
};

// A bundle whose agents ask for every subtask.
ModelBundle asking_bundle() {
  auto b = small_bundle();
  for (auto* net : {&*b.hrl, &*b.fixed, &*b.sup})
    for (std::size_t i = 0; i < 4; ++i) net->store.value(net->low[i].b_out).values.back() = 50.0;
  b.lam_rule_threshold = 1.0;
  return b;
}

}  // namespace

TEST_CASE("a session asks, takes answers and completes") {
  const auto b = asking_bundle();
  SessionStore store(b);
  auto v = store.create("send me a note when it rains", AgentKind::Hrl);
  CHECK(v.agent == "hrl");
  CHECK(store.size() == 1);
  std::size_t questions = 0;
  while (v.status == SessionStatus::AwaitingAnswer) {
    REQUIRE(v.question.has_value());
    CHECK(*v.question == question(*v.question_subtask));
    ++questions;
    v = store.answer(v.id, b.ontology.channel(0).name);
  }
  // One question per subtask under the default cap.
  CHECK(questions == 4);
  for (const auto& p : v.prediction) CHECK(p.has_value());
  CHECK(v.transcript.size() == 1 + 2 * questions);
  CHECK(v.transcript.front() == std::make_pair(std::string("user"), std::string("send me a note when it rains")));
  CHECK_THROWS_AS(store.answer(v.id, "more"), ConflictError);
  const auto again = store.get(v.id);
  CHECK(again.status == SessionStatus::Completed);
  CHECK(again.prediction == v.prediction);

  const auto j = store.view_json(again, true);
  CHECK(j["status"] == "completed");
  CHECK(j["prediction"]["trigger_channel"]["name"] == b.ontology.channel(*v.prediction[0]).name);
  CHECK(j["transcript"].size() == again.transcript.size());
}

TEST_CASE("LAM completes immediately without questions") {
  const auto& b = small_bundle();
  SessionStore store(b);
  const auto v = store.create("save photos to dropbox", AgentKind::Lam);
  CHECK(v.status == SessionStatus::Completed);
  CHECK_FALSE(v.question.has_value());
  CHECK(v.transcript.size() == 1);
  const auto j = store.view_json(v, false);
  CHECK_FALSE(j.contains("transcript"));
  CHECK_FALSE(j.contains("question"));
}

TEST_CASE("session errors") {
  auto b = asking_bundle();
  b.fixed.reset();
  SessionStore store(b);
  CHECK_THROWS_AS(store.create("   "), ValidationError);
  CHECK_THROWS_AS(store.create("a recipe", AgentKind::HrlFixedOrder), ValidationError);
  CHECK_THROWS_AS(store.get("nope"), NotFoundError);
  CHECK_THROWS_AS(store.answer("nope", "x"), NotFoundError);
  const auto v = store.create("a recipe");
  REQUIRE(v.status == SessionStatus::AwaitingAnswer);
  CHECK_THROWS_AS(store.answer(v.id, " \t "), ValidationError);
  // A rejected answer leaves the session where it was.
  CHECK(store.get(v.id).question == v.question);
}

TEST_CASE("sessions expire after the idle TTL") {
  const auto b = asking_bundle();
  FakeClock clock;
  SessionConfig cfg;
  cfg.ttl = std::chrono::seconds(60);
  cfg.clock = clock.fn();
  SessionStore store(b, cfg);
  const auto a = store.create("first recipe");
  const auto c = store.create("second recipe");
  clock.advance(std::chrono::seconds(45));
  store.get(a.id);  // touching refreshes a
  clock.advance(std::chrono::seconds(30));
  CHECK_THROWS_AS(store.get(c.id), NotFoundError);
  CHECK(store.get(a.id).id == a.id);
  clock.advance(std::chrono::seconds(61));
  CHECK(store.purge_expired() == 1);
  CHECK(store.size() == 0);
}

TEST_CASE("sessions are isolated from each other") {
  const auto b = asking_bundle();
  SessionStore store(b);
  const auto a = store.create("turn on lights when i get home");
  const auto c = store.create("turn on lights when i get home");
  CHECK(a.id != c.id);
  store.answer(a.id, "weather");
  CHECK(store.get(c.id).transcript.size() == 2);
  CHECK(store.get(a.id).transcript.size() == 4);

  std::set<std::string> ids;
  std::mutex m;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 10; ++i) {
        auto v = store.create("post a tweet when it snows");
        while (v.status == SessionStatus::AwaitingAnswer) v = store.answer(v.id, "snow");
        std::lock_guard lock(m);
        ids.insert(v.id);
      }
    });
  for (auto& th : threads) th.join();
  CHECK(ids.size() == 40);
  CHECK(store.size() == 42);
}
