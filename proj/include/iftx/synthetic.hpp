#pragma once

#include <cstdint>
#include <vector>

#include "iftx/ontology.hpp"
#include "iftx/simulator.hpp"

namespace iftx {

// Deterministic generator for an ontology plus recipe descriptions in which
// each of the four components is independently left unmentioned with
// probability `omit_prob`. Descriptions follow the same six keyword templates
// the answer-bank extractor understands.
struct SyntheticConfig {
  std::size_t channels = 10;
  std::size_t triggers_per_channel = 3;
  std::size_t actions_per_channel = 2;
  std::size_t train = 5000;
  std::size_t test = 1000;
  double omit_prob = 0.5;
  // Chance that a mention uses a paraphrase-table synonym instead of the
  // canonical word.
  double synonym_prob = 0.25;
  std::uint64_t seed = 7;
};

struct SyntheticWorld {
  Ontology ontology;
  ParaphraseTable paraphrases;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;  // carries vague flags
};

SyntheticWorld generate_synthetic(const SyntheticConfig& config);

}  // namespace iftx
