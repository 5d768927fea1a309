#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iftx/baselines.hpp"
#include "iftx/checkpoint.hpp"
#include "iftx/simulator.hpp"
#include "iftx/trainer.hpp"

namespace iftx {

// Everything an agent needs at inference time. Checkpoint namespaces:
// "lam/" (LAM classifiers), "sup/" (LAM-sup), "hrl/", "fixed/" (HRL-fixedOrder).
struct ModelBundle {
  Ontology ontology;
  Vocabulary vocab;
  ModelDims dims;
  RewardConfig rewards;
  double lam_rule_threshold = 0.85;
  std::optional<LamNet> lam;
  std::optional<PolicyNet> sup, hrl, fixed;
  nlohmann::json info = nlohmann::json::object();  // free-form training provenance
};

Checkpoint to_checkpoint(const ModelBundle& bundle);
ModelBundle from_checkpoint(const Checkpoint& ckpt);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

// Throws NotFoundError when the bundle lacks the agent's parameters.
std::unique_ptr<Controller> make_controller(const ModelBundle& bundle, AgentKind kind);
bool has_agent(const ModelBundle& bundle, AgentKind kind);

// On-disk data directory: ontology.jsonl, train.jsonl, test.jsonl,
// paraphrases.tsv and, once built, bank.jsonl.
struct Dataset {
  Ontology ontology;
  std::vector<LabeledExample> train, test;
  ParaphraseTable paraphrases;
  std::optional<AnswerBank> bank;
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

struct PretrainConfig {
  ModelDims dims;  // vocab is filled in from the data
  SupervisedConfig lam{10, 1.0};
  SupervisedConfig sup{5, 0.2};
  double lam_rule_threshold = 0.85;
  int min_count = 1;
  std::uint64_t seed = 1;
};

// Vocabulary, LAM training, LAM-rule data collection and supervised policy
// pretraining. The result holds "lam" and "sup".
ModelBundle pretrain_bundle(const Dataset& data, const PretrainConfig& config);

// REINFORCE from the supervised policy. kind is Hrl or HrlFixedOrder; the
// fixed-order agent trains only its low level. Validation recipes are
// sampled from the training corpus.
TrainResult train_agent(ModelBundle& bundle, const Dataset& data, AgentKind kind, TrainConfig config,
                        const std::function<void(const MetricsRecord&)>& on_metrics = {});

}  // namespace iftx
