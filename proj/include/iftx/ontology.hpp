#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iftx/common.hpp"

namespace iftx {

enum class Role { Trigger, Action };

struct Channel {
  int id = 0;
  std::string name;
};

struct FunctionDef {
  int id = 0;
  int channel_id = 0;
  Role role = Role::Trigger;
  std::string name;
  Tokens official_description;
};

// A recipe is the 4-tuple (trigger channel, trigger function, action channel,
// action function). Component order matches the subtask order st1..st4.
struct Recipe {
  int tc = 0;
  int tf = 0;
  int ac = 0;
  int af = 0;

  int component(std::size_t i) const;
  int& component(std::size_t i);
  friend bool operator==(const Recipe&, const Recipe&) = default;
};

struct LabeledExample {
  Tokens description;
  Recipe gold;
  // Five crowd annotations (real test sets only).
  std::optional<std::vector<Recipe>> annotations;
  // Components omitted by the synthetic generator.
  std::optional<std::array<bool, 4>> vague;
};

class Ontology {
 public:
  Ontology() = default;
  Ontology(std::vector<Channel> channels, std::vector<FunctionDef> functions);

  const std::vector<Channel>& channels() const { return channels_; }
  const std::vector<FunctionDef>& functions() const { return functions_; }
  const Channel& channel(int id) const;
  const FunctionDef& function(int id) const;

  // Ordered value space V_g for subtask index 0..3. Channel subtasks list all
  // channel ids, function subtasks list role-matching function ids, both in
  // ontology order.
  const std::vector<int>& values(std::size_t subtask) const;
  // Position of `value` in values(subtask), or -1.
  int value_index(std::size_t subtask, int value) const;

  // Throws IntegrityError when the recipe breaks channel/role consistency.
  void check_recipe(const Recipe& r) const;

 private:
  std::vector<Channel> channels_;
  std::vector<FunctionDef> functions_;
  std::array<std::vector<int>, 4> values_;
  std::array<std::unordered_map<int, int>, 4> value_pos_;
};

// Line-delimited ontology records: {kind, id, name, channel_id?, role?, description?}.
Ontology load_ontology(const std::filesystem::path& path);
Ontology parse_ontology(std::istream& in);
void save_ontology(const Ontology& ontology, const std::filesystem::path& path);
void write_ontology(const Ontology& ontology, std::ostream& out);

// Line-delimited corpus records: {description, tc, tf, ac, af, annotations?, vague?}.
std::vector<LabeledExample> load_corpus(const std::filesystem::path& path, const Ontology& ontology);
std::vector<LabeledExample> parse_corpus(std::istream& in, const Ontology& ontology);
void save_corpus(const std::vector<LabeledExample>& corpus, const std::filesystem::path& path);

// Lowercase, split punctuation into separate tokens, split on whitespace.
Tokens tokenize(const std::string& text);

struct ClaritySplit {
  std::vector<std::size_t> ci;
  std::vector<std::size_t> vi12;
  std::vector<std::size_t> vi34;

  std::vector<std::size_t> vague() const;  // vi12 ∪ vi34, sorted
};

// A subtask is clear iff at least 3 of the 5 annotators agree with gold on it.
// Throws ValidationError when an example lacks exactly five annotations.
ClaritySplit split_by_clarity(std::span<const LabeledExample> examples);

// Uses annotations when present, otherwise the generator's vague flags.
ClaritySplit split_test_set(std::span<const LabeledExample> examples);

std::size_t count_vague(const LabeledExample& example);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int index(const std::string& token) const;
  std::vector<int> encode(const Tokens& tokens) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return tokens_.size(); }
  // Non-reserved tokens in index order.
  std::vector<std::string> entries() const;
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokens with frequency >= min_count across descriptions and extra texts
// (simulated answers, channel names). Entries are sorted lexicographically.
Vocabulary build_vocabulary(std::span<const LabeledExample> corpus, std::span<const Tokens> extra,
                            int min_count);

}  // namespace iftx
