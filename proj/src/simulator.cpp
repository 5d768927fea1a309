#include "iftx/simulator.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace iftx {

using nlohmann::json;

void ParaphraseTable::add(const std::string& phrase, const std::string& paraphrase) {
  auto p = join(tokenize(phrase));
  auto q = join(tokenize(paraphrase));
  if (p.empty() || q.empty() || p == q) return;
  auto& alts = entries_[p];
  if (std::find(alts.begin(), alts.end(), q) == alts.end()) alts.push_back(q);
  max_len_ = std::max(max_len_, tokenize(p).size());
}

ParaphraseTable parse_paraphrases(std::istream& in) {
  ParaphraseTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected phrase<TAB>paraphrase");
    table.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return table;
}

ParaphraseTable load_paraphrases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open paraphrase file " + path.string());
  return parse_paraphrases(in);
}

void save_paraphrases(const ParaphraseTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& [phrase, alts] : table.entries())
    for (const auto& a : alts) out << phrase << '\t' << a << '\n';
}

AnswerBank::AnswerBank(std::vector<std::vector<Tokens>> answers) : answers_(std::move(answers)) {
  for (std::size_t f = 0; f < answers_.size(); ++f)
    if (answers_[f].empty()) throw IntegrityError("function " + std::to_string(f) + " has no simulated answers");
}

const std::vector<Tokens>& AnswerBank::answers(int function_id) const {
  if (function_id < 0 || static_cast<std::size_t>(function_id) >= answers_.size())
    throw IntegrityError("answer bank has no entry for function " + std::to_string(function_id));
  return answers_[static_cast<std::size_t>(function_id)];
}

double AnswerBank::mean_size() const {
  if (answers_.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& a : answers_) n += a.size();
  return static_cast<double>(n) / static_cast<double>(answers_.size());
}

std::vector<Tokens> AnswerBank::all() const {
  std::vector<Tokens> out;
  for (const auto& a : answers_) out.insert(out.end(), a.begin(), a.end());
  return out;
}

void save_answer_bank(const AnswerBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t f = 0; f < bank.num_functions(); ++f) {
    json answers = json::array();
    for (const auto& a : bank.answers(static_cast<int>(f))) answers.push_back(join(a));
    out << json{{"function_id", f}, {"answers", answers}}.dump() << '\n';
  }
}

AnswerBank load_answer_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open answer bank " + path.string());
  std::vector<std::vector<Tokens>> answers;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      auto id = j.at("function_id").get<std::size_t>();
      if (id >= answers.size()) answers.resize(id + 1);
      for (const auto& a : j.at("answers")) answers[id].push_back(tokenize(a.get<std::string>()));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return AnswerBank(std::move(answers));
}

Tokens revise_description(const Tokens& official) {
  std::size_t start = 0;
  if (official.size() >= 3 && official[0] == "this" && (official[1] == "trigger" || official[1] == "action") &&
      official[2] == "will")
    start = 3;
  static const std::map<std::string, std::string> person = {
      {"you", "i"}, {"your", "my"}, {"yours", "mine"}, {"yourself", "myself"}, {"you're", "i'm"}};
  Tokens out;
  for (std::size_t i = start; i < official.size(); ++i) {
    auto it = person.find(official[i]);
    out.push_back(it == person.end() ? official[i] : it->second);
  }
  return out;
}

std::vector<Tokens> paraphrase_variants(const Tokens& text, const ParaphraseTable& table, std::size_t max_variants) {
  std::vector<Tokens> out;
  std::set<Tokens> seen{text};
  for (std::size_t pos = 0; pos < text.size() && out.size() < max_variants; ++pos) {
    for (std::size_t len = 1; len <= table.max_phrase_length() && pos + len <= text.size(); ++len) {
      Tokens span(text.begin() + static_cast<std::ptrdiff_t>(pos),
                  text.begin() + static_cast<std::ptrdiff_t>(pos + len));
      auto it = table.entries().find(join(span));
      if (it == table.entries().end()) continue;
      for (const auto& alt : it->second) {
        Tokens variant(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos));
        auto rep = tokenize(alt);
        variant.insert(variant.end(), rep.begin(), rep.end());
        variant.insert(variant.end(), text.begin() + static_cast<std::ptrdiff_t>(pos + len), text.end());
        if (seen.insert(variant).second) out.push_back(std::move(variant));
        if (out.size() >= max_variants) return out;
      }
    }
  }
  return out;
}

namespace {

Tokens slice(const Tokens& t, std::size_t a, std::size_t b) {
  return Tokens(t.begin() + static_cast<std::ptrdiff_t>(a), t.begin() + static_cast<std::ptrdiff_t>(b));
}

std::optional<std::size_t> find_token(const Tokens& t, const char* word, std::size_t from = 0) {
  for (std::size_t i = from; i < t.size(); ++i)
    if (t[i] == word) return i;
  return std::nullopt;
}

Tokens strip_trailing_punct(Tokens t) {
  while (!t.empty() && t.back().size() == 1 && std::ispunct(static_cast<unsigned char>(t.back()[0]))) t.pop_back();
  return t;
}

}  // namespace

std::optional<std::pair<Tokens, Tokens>> extract_template(const Tokens& d) {
  auto desc = strip_trailing_punct(d);
  auto pair = [](Tokens x, Tokens y) -> std::optional<std::pair<Tokens, Tokens>> {
    if (x.empty() || y.empty()) return std::nullopt;
    return std::make_pair(std::move(x), std::move(y));
  };
  const std::size_t n = desc.size();
  if (n >= 4 && desc[0] == "if") {
    if (auto k = find_token(desc, "then", 1)) return pair(slice(desc, 1, *k), slice(desc, *k + 1, n));
  }
  if (n >= 4 && desc[0] == "when") {
    if (auto k = find_token(desc, ",", 1)) return pair(slice(desc, 1, *k), slice(desc, *k + 1, n));
  }
  if (auto k = find_token(desc, "then", 1)) return pair(slice(desc, 0, *k), slice(desc, *k + 1, n));
  if (auto k = find_token(desc, "when", 1)) return pair(slice(desc, *k + 1, n), slice(desc, 0, *k));
  if (auto k = find_token(desc, "if", 1)) return pair(slice(desc, *k + 1, n), slice(desc, 0, *k));
  if (auto k = find_token(desc, "to", 1)) return pair(slice(desc, 0, *k), slice(desc, *k + 1, n));
  return std::nullopt;
}

BankBuildResult build_answer_bank(const Ontology& ontology, std::span<const LabeledExample> corpus,
                                  const ParaphraseTable& paraphrases, Rng& rng, const BankOptions& options) {
  const auto& fns = ontology.functions();
  std::vector<std::vector<Tokens>> extracted(fns.size());
  for (const auto& ex : corpus) {
    auto parts = extract_template(ex.description);
    if (!parts) continue;
    // A part whose function the generator left out says nothing about it.
    const bool tf_vague = ex.vague && (*ex.vague)[1];
    const bool af_vague = ex.vague && (*ex.vague)[3];
    if (!tf_vague) extracted[static_cast<std::size_t>(ex.gold.tf)].push_back(parts->first);
    if (!af_vague) extracted[static_cast<std::size_t>(ex.gold.af)].push_back(parts->second);
  }

  BankBuildResult result;
  std::vector<std::vector<Tokens>> answers(fns.size());
  for (const auto& f : fns) {
    auto& bank = answers[static_cast<std::size_t>(f.id)];
    std::set<Tokens> seen;
    auto push = [&](Tokens t) {
      if (!t.empty() && seen.insert(t).second) bank.push_back(std::move(t));
    };
    Tokens base;
    if (f.official_description.empty()) {
      result.fallback_functions.push_back(f.id);
      base = tokenize(f.name);
    } else {
      base = revise_description(f.official_description);
    }
    push(base);
    for (auto& v : paraphrase_variants(base, paraphrases, options.max_paraphrase_variants)) push(std::move(v));

    auto& pool = extracted[static_cast<std::size_t>(f.id)];
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t taken = 0;
    for (std::size_t i : order) {
      if (taken >= options.max_extractions) break;
      if (seen.count(pool[i])) continue;
      push(pool[i]);
      ++taken;
    }
  }
  result.bank = AnswerBank(std::move(answers));
  return result;
}

const std::string& question(SubtaskId subtask) {
  static const std::array<std::string, 4> templates = {
      "Which channel triggers the action?",
      "Which event triggers the action?",
      "Which channel should act per your request?",
      "Which event results from the trigger?",
  };
  return templates[index_of(subtask)];
}

Tokens UserSimulator::answer(SubtaskId subtask, const Recipe& gold, Rng& rng) const {
  if (is_channel_subtask(subtask)) return tokenize(ontology_->channel(gold.component(index_of(subtask))).name);
  const auto& options = bank_->answers(gold.component(index_of(subtask)));
  return options[rng.index(options.size())];
}

std::vector<Tokens> simulator_texts(const Ontology& ontology, const AnswerBank& bank) {
  std::vector<Tokens> out;
  for (const auto& c : ontology.channels()) out.push_back(tokenize(c.name));
  auto answers = bank.all();
  out.insert(out.end(), answers.begin(), answers.end());
  return out;
}

}  // namespace iftx
