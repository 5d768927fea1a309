#include <filesystem>

#include "doctest.h"
#include "support.hpp"

using namespace iftx;
using namespace iftx::testing;

namespace fs = std::filesystem;

TEST_CASE("a bundle survives a checkpoint round-trip bit for bit") {
  const auto& b = small_bundle();
  const auto path = fs::temp_directory_path() / "iftx_bundle_roundtrip.ckpt";
  save_bundle(b, path);
  const auto back = load_bundle(path);
  CHECK(back.dims == b.dims);
  CHECK(back.vocab.size() == b.vocab.size());
  CHECK(back.ontology.functions().size() == b.ontology.functions().size());
  CHECK(back.rewards.beta == b.rewards.beta);
  CHECK(back.lam_rule_threshold == b.lam_rule_threshold);
  REQUIRE(back.lam.has_value());
  REQUIRE(back.hrl.has_value());
  CHECK(back.lam->store == b.lam->store);
  CHECK(back.sup->store == b.sup->store);
  CHECK(back.hrl->store == b.hrl->store);
  CHECK(back.fixed->store == b.fixed->store);
  CHECK(back.hrl->w_d == b.hrl->w_d);
  CHECK(back.info == b.info);
  save_bundle(back, path.string() + ".2");
  CHECK(checkpoint_hash(path) == checkpoint_hash(path.string() + ".2"));
  fs::remove(path);
  fs::remove(path.string() + ".2");
}

TEST_CASE("greedy episodes agree before and after reloading") {
  const auto& b = small_bundle();
  const auto path = fs::temp_directory_path() / "iftx_bundle_episodes.ckpt";
  save_bundle(b, path);
  const auto back = load_bundle(path);
  fs::remove(path);
  auto w = make_world(150, 40, 3);
  UserSimulator user(w->ontology(), w->bank);
  for (auto kind : {AgentKind::Lam, AgentKind::LamRule, AgentKind::LamSup, AgentKind::HrlFixedOrder, AgentKind::Hrl}) {
    Environment env(b.ontology, b.rewards);
    const auto c1 = make_controller(b, kind);
    const auto c2 = make_controller(back, kind);
    const auto a = rollout_serial(env, *c1, w->synth.test, user, 9);
    const auto z = rollout_serial(env, *c2, w->synth.test, user, 9);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(same_outcome(a[k], z[k]));
  }
}

TEST_CASE("missing agents are reported as not found") {
  auto b = small_bundle();
  b.hrl.reset();
  CHECK_FALSE(has_agent(b, AgentKind::Hrl));
  CHECK(has_agent(b, AgentKind::LamRule));
  CHECK_THROWS_AS(make_controller(b, AgentKind::Hrl), NotFoundError);
  b.lam.reset();
  CHECK_THROWS_AS(make_controller(b, AgentKind::Lam), NotFoundError);
}

TEST_CASE("training rejects non-RL agents and bundles without a supervised policy") {
  auto w = make_world(60, 10);
  const auto data = world_dataset(*w);
  auto b = small_bundle();
  TrainConfig tc;
  CHECK_THROWS_AS(train_agent(b, data, AgentKind::LamRule, tc), ValidationError);
  b.sup.reset();
  CHECK_THROWS_AS(train_agent(b, data, AgentKind::Hrl, tc), StateError);
  auto no_bank = data;
  no_bank.bank.reset();
  CHECK_THROWS_AS(pretrain_bundle(no_bank, PretrainConfig{}), StateError);
}

TEST_CASE("pretraining records its losses and is deterministic") {
  auto w = make_world(80, 10);
  const auto data = world_dataset(*w);
  PretrainConfig pc;
  pc.dims = tiny_dims(0);
  pc.lam = {2, 1.0};
  pc.sup = {1, 0.2};
  const auto a = pretrain_bundle(data, pc);
  const auto b = pretrain_bundle(data, pc);
  CHECK(a.dims.vocab == a.vocab.size());
  CHECK(a.lam->store == b.lam->store);
  CHECK(a.sup->store == b.sup->store);
  CHECK(a.info["pretrain"]["lam_losses"].size() == 2);
  CHECK_FALSE(a.hrl.has_value());
}

TEST_CASE("data directories round-trip") {
  auto w = make_world(40, 10);
  const auto d = world_dataset(*w);
  const auto dir = fs::temp_directory_path() / "iftx_dataset_roundtrip";
  fs::remove_all(dir);
  save_dataset(d, dir);
  for (const char* f : {"ontology.jsonl", "train.jsonl", "test.jsonl", "paraphrases.tsv", "bank.jsonl"})
    CHECK(fs::exists(dir / f));
  const auto back = load_dataset(dir);
  CHECK(back.train.size() == d.train.size());
  CHECK(back.test.size() == d.test.size());
  for (std::size_t k = 0; k < d.test.size(); ++k) {
    CHECK(back.test[k].description == d.test[k].description);
    CHECK(back.test[k].gold == d.test[k].gold);
    CHECK(back.test[k].vague == d.test[k].vague);
  }
  CHECK(back.paraphrases.entries() == d.paraphrases.entries());
  CHECK(back.bank->all() == d.bank->all());
  fs::remove(dir / "bank.jsonl");
  CHECK_FALSE(load_dataset(dir).bank.has_value());
  fs::remove_all(dir);
  CHECK_THROWS(load_dataset(dir));
}
