#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iftx/common.hpp"
#include "iftx/ontology.hpp"
#include "iftx/subtask.hpp"

namespace iftx {

// phrase -> equivalent phrases; keys and values are space-joined token strings.
class ParaphraseTable {
 public:
  void add(const std::string& phrase, const std::string& paraphrase);
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t max_phrase_length() const { return max_len_; }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
  std::size_t max_len_ = 0;
};

// Tab-separated "phrase<TAB>paraphrase" lines.
ParaphraseTable load_paraphrases(const std::filesystem::path& path);
ParaphraseTable parse_paraphrases(std::istream& in);
void save_paraphrases(const ParaphraseTable& table, const std::filesystem::path& path);

class AnswerBank {
 public:
  AnswerBank() = default;
  explicit AnswerBank(std::vector<std::vector<Tokens>> answers);

  const std::vector<Tokens>& answers(int function_id) const;
  std::size_t num_functions() const { return answers_.size(); }
  double mean_size() const;
  // Every answer of every function, in function order.
  std::vector<Tokens> all() const;

 private:
  std::vector<std::vector<Tokens>> answers_;
};

// Line-delimited {function_id, answers[]}.
void save_answer_bank(const AnswerBank& bank, const std::filesystem::path& path);
AnswerBank load_answer_bank(const std::filesystem::path& path);

struct BankOptions {
  std::size_t max_paraphrase_variants = 10;
  std::size_t max_extractions = 10;
};

struct BankBuildResult {
  AnswerBank bank;
  // Functions whose official description was empty; their name stood in.
  std::vector<int> fallback_functions;
};

// Drops a leading "this trigger/action will" and shifts second person to first.
Tokens revise_description(const Tokens& official);

// Single-substitution variants of `text`, at most `max_variants`, in scan order.
std::vector<Tokens> paraphrase_variants(const Tokens& text, const ParaphraseTable& table, std::size_t max_variants);

// Splits a description into (trigger part, action part) using one of six
// keyword templates: "if X then Y", "when X , Y", "X then Y", "Y when X",
// "Y if X", "X to Y".
std::optional<std::pair<Tokens, Tokens>> extract_template(const Tokens& description);

BankBuildResult build_answer_bank(const Ontology& ontology, std::span<const LabeledExample> corpus,
                                  const ParaphraseTable& paraphrases, Rng& rng, const BankOptions& options = {});

// Fixed clarification question per subtask.
const std::string& question(SubtaskId subtask);

class AnswerProvider {
 public:
  virtual ~AnswerProvider() = default;
  virtual Tokens answer(SubtaskId subtask, const Recipe& gold, Rng& rng) const = 0;
};

// Channel questions get the gold channel name; function questions get a
// uniform draw from the gold function's bank.
class UserSimulator final : public AnswerProvider {
 public:
  UserSimulator(const Ontology& ontology, const AnswerBank& bank) : ontology_(&ontology), bank_(&bank) {}
  Tokens answer(SubtaskId subtask, const Recipe& gold, Rng& rng) const override;

  const AnswerBank& bank() const { return *bank_; }

 private:
  const Ontology* ontology_;
  const AnswerBank* bank_;
};

// Channel-name tokens plus every bank answer; feeds vocabulary construction.
std::vector<Tokens> simulator_texts(const Ontology& ontology, const AnswerBank& bank);

}  // namespace iftx
