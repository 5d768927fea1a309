#include "iftx/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace iftx {

using nlohmann::json;

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string join(const Tokens& tokens, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

int Recipe::component(std::size_t i) const {
  switch (i) {
    case 0: return tc;
    case 1: return tf;
    case 2: return ac;
    case 3: return af;
  }
  throw ContractViolation("recipe component index out of range");
}

int& Recipe::component(std::size_t i) {
  switch (i) {
    case 0: return tc;
    case 1: return tf;
    case 2: return ac;
    case 3: return af;
  }
  throw ContractViolation("recipe component index out of range");
}

Ontology::Ontology(std::vector<Channel> channels, std::vector<FunctionDef> functions)
    : channels_(std::move(channels)), functions_(std::move(functions)) {
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (channels_[i].id != static_cast<int>(i))
      throw IntegrityError("channel ids must be dense and ordered; got " + std::to_string(channels_[i].id) +
                           " at position " + std::to_string(i));
    if (channels_[i].name.empty()) throw IntegrityError("channel " + std::to_string(i) + " has an empty name");
  }
  for (std::size_t i = 0; i < functions_.size(); ++i) {
    const auto& f = functions_[i];
    if (f.id != static_cast<int>(i))
      throw IntegrityError("function ids must be dense and ordered; got " + std::to_string(f.id) + " at position " +
                           std::to_string(i));
    if (f.channel_id < 0 || f.channel_id >= static_cast<int>(channels_.size()))
      throw IntegrityError("function " + std::to_string(f.id) + " refers to missing channel " +
                           std::to_string(f.channel_id));
    if (f.name.empty()) throw IntegrityError("function " + std::to_string(f.id) + " has an empty name");
  }
  for (const auto& c : channels_) {
    values_[0].push_back(c.id);
    values_[2].push_back(c.id);
  }
  for (const auto& f : functions_) values_[f.role == Role::Trigger ? 1 : 3].push_back(f.id);
  for (std::size_t g = 0; g < 4; ++g)
    for (std::size_t k = 0; k < values_[g].size(); ++k) value_pos_[g][values_[g][k]] = static_cast<int>(k);
}

const Channel& Ontology::channel(int id) const {
  if (id < 0 || id >= static_cast<int>(channels_.size())) throw IntegrityError("unknown channel " + std::to_string(id));
  return channels_[static_cast<std::size_t>(id)];
}

const FunctionDef& Ontology::function(int id) const {
  if (id < 0 || id >= static_cast<int>(functions_.size()))
    throw IntegrityError("unknown function " + std::to_string(id));
  return functions_[static_cast<std::size_t>(id)];
}

const std::vector<int>& Ontology::values(std::size_t subtask) const { return values_.at(subtask); }

int Ontology::value_index(std::size_t subtask, int value) const {
  const auto& m = value_pos_.at(subtask);
  auto it = m.find(value);
  return it == m.end() ? -1 : it->second;
}

void Ontology::check_recipe(const Recipe& r) const {
  const auto& tf = function(r.tf);
  const auto& af = function(r.af);
  channel(r.tc);
  channel(r.ac);
  if (tf.role != Role::Trigger || tf.channel_id != r.tc)
    throw IntegrityError("trigger function " + std::to_string(r.tf) + " does not belong to trigger channel " +
                         std::to_string(r.tc));
  if (af.role != Role::Action || af.channel_id != r.ac)
    throw IntegrityError("action function " + std::to_string(r.af) + " does not belong to action channel " +
                         std::to_string(r.ac));
}

namespace {

json parse_line(const std::string& line, std::size_t lineno) {
  try {
    auto j = json::parse(line);
    if (!j.is_object()) throw ParseError("line " + std::to_string(lineno) + ": record is not an object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, std::size_t lineno) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError("line " + std::to_string(lineno) + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError("line " + std::to_string(lineno) + ": field '" + key + "' has the wrong type");
  }
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Ontology parse_ontology(std::istream& in) {
  std::map<int, Channel> channels;
  std::map<int, FunctionDef> functions;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto j = parse_line(line, lineno);
    auto kind = field<std::string>(j, "kind", lineno);
    int id = field<int>(j, "id", lineno);
    auto name = field<std::string>(j, "name", lineno);
    if (id < 0) throw ParseError("line " + std::to_string(lineno) + ": negative id");
    if (kind == "channel") {
      if (!channels.emplace(id, Channel{id, name}).second)
        throw ParseError("line " + std::to_string(lineno) + ": duplicate channel id " + std::to_string(id));
    } else if (kind == "function") {
      FunctionDef f;
      f.id = id;
      f.name = name;
      f.channel_id = field<int>(j, "channel_id", lineno);
      auto role = field<std::string>(j, "role", lineno);
      if (role == "trigger")
        f.role = Role::Trigger;
      else if (role == "action")
        f.role = Role::Action;
      else
        throw ParseError("line " + std::to_string(lineno) + ": unknown role '" + role + "'");
      if (j.contains("description")) f.official_description = tokenize(field<std::string>(j, "description", lineno));
      if (!functions.emplace(id, std::move(f)).second)
        throw ParseError("line " + std::to_string(lineno) + ": duplicate function id " + std::to_string(id));
    } else {
      throw ParseError("line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
    }
  }
  std::vector<Channel> cv;
  for (auto& [id, c] : channels) cv.push_back(std::move(c));
  std::vector<FunctionDef> fv;
  for (auto& [id, f] : functions) fv.push_back(std::move(f));
  return Ontology(std::move(cv), std::move(fv));
}

Ontology load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open ontology file " + path.string());
  return parse_ontology(in);
}

void write_ontology(const Ontology& ontology, std::ostream& out) {
  for (const auto& c : ontology.channels())
    out << json{{"kind", "channel"}, {"id", c.id}, {"name", c.name}}.dump() << '\n';
  for (const auto& f : ontology.functions()) {
    json j{{"kind", "function"},
           {"id", f.id},
           {"name", f.name},
           {"channel_id", f.channel_id},
           {"role", f.role == Role::Trigger ? "trigger" : "action"}};
    if (!f.official_description.empty()) j["description"] = join(f.official_description);
    out << j.dump() << '\n';
  }
}

void save_ontology(const Ontology& ontology, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_ontology(ontology, out);
}

std::vector<LabeledExample> parse_corpus(std::istream& in, const Ontology& ontology) {
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto j = parse_line(line, lineno);
    LabeledExample ex;
    ex.description = tokenize(field<std::string>(j, "description", lineno));
    ex.gold = {field<int>(j, "tc", lineno), field<int>(j, "tf", lineno), field<int>(j, "ac", lineno),
               field<int>(j, "af", lineno)};
    try {
      ontology.check_recipe(ex.gold);
    } catch (const IntegrityError& e) {
      throw IntegrityError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.contains("annotations")) {
      auto raw = field<std::vector<std::array<int, 4>>>(j, "annotations", lineno);
      std::vector<Recipe> ann;
      for (const auto& a : raw) ann.push_back({a[0], a[1], a[2], a[3]});
      ex.annotations = std::move(ann);
    }
    if (j.contains("vague")) ex.vague = field<std::array<bool, 4>>(j, "vague", lineno);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledExample> load_corpus(const std::filesystem::path& path, const Ontology& ontology) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path.string());
  return parse_corpus(in, ontology);
}

void save_corpus(const std::vector<LabeledExample>& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& ex : corpus) {
    json j{{"description", join(ex.description)},
           {"tc", ex.gold.tc},
           {"tf", ex.gold.tf},
           {"ac", ex.gold.ac},
           {"af", ex.gold.af}};
    if (ex.annotations) {
      json a = json::array();
      for (const auto& r : *ex.annotations) a.push_back({r.tc, r.tf, r.ac, r.af});
      j["annotations"] = a;
    }
    if (ex.vague) j["vague"] = *ex.vague;
    out << j.dump() << '\n';
  }
}

Tokens tokenize(const std::string& text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::vector<std::size_t> ClaritySplit::vague() const {
  std::vector<std::size_t> v(vi12);
  v.insert(v.end(), vi34.begin(), vi34.end());
  std::sort(v.begin(), v.end());
  return v;
}

namespace {

void place(ClaritySplit& split, std::size_t idx, std::size_t n_vague) {
  if (n_vague == 0)
    split.ci.push_back(idx);
  else if (n_vague <= 2)
    split.vi12.push_back(idx);
  else
    split.vi34.push_back(idx);
}

std::size_t annotated_vague(const LabeledExample& ex) {
  std::size_t n = 0;
  for (std::size_t g = 0; g < 4; ++g) {
    int agree = 0;
    for (const auto& a : *ex.annotations) agree += a.component(g) == ex.gold.component(g);
    if (agree < 3) ++n;
  }
  return n;
}

}  // namespace

std::size_t count_vague(const LabeledExample& ex) {
  if (ex.annotations) {
    if (ex.annotations->size() != 5) throw ValidationError("annotation-based clarity needs exactly 5 annotations");
    return annotated_vague(ex);
  }
  if (ex.vague) return static_cast<std::size_t>(std::count(ex.vague->begin(), ex.vague->end(), true));
  throw ValidationError("example carries neither annotations nor vague flags");
}

ClaritySplit split_by_clarity(std::span<const LabeledExample> examples) {
  ClaritySplit split;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (!ex.annotations || ex.annotations->size() != 5)
      throw ValidationError("example " + std::to_string(i) + " does not carry 5 annotations");
    place(split, i, annotated_vague(ex));
  }
  return split;
}

ClaritySplit split_test_set(std::span<const LabeledExample> examples) {
  ClaritySplit split;
  for (std::size_t i = 0; i < examples.size(); ++i) place(split, i, count_vague(examples[i]));
  return split;
}

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"} {
  index_[tokens_[0]] = kPad;
  index_[tokens_[1]] = kUnk;
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (index_.count(t)) throw IntegrityError("duplicate vocabulary entry '" + t + "'");
    index_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

int Vocabulary::index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

std::vector<std::string> Vocabulary::entries() const { return {tokens_.begin() + 2, tokens_.end()}; }

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = fnv1a(t.data(), t.size(), h);
    h = fnv1a("\n", 1, h);
  }
  return h;
}

Vocabulary build_vocabulary(std::span<const LabeledExample> corpus, std::span<const Tokens> extra, int min_count) {
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& ex : corpus)
    for (const auto& t : ex.description) ++counts[t];
  for (const auto& text : extra)
    for (const auto& t : text) ++counts[t];
  std::vector<std::string> kept;
  for (const auto& [t, c] : counts)
    if (c >= min_count && t != "<pad>" && t != "<unk>") kept.push_back(t);
  return Vocabulary(kept);
}

}  // namespace iftx
