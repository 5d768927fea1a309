#include "iftx/synthetic.hpp"

#include <cctype>
#include <string>
#include <utility>

namespace iftx {

namespace {

using WordPair = std::pair<const char*, const char*>;

constexpr const char* kChannelNames[] = {
    "Twitter", "Evernote", "Gmail",   "Facebook", "Dropbox", "Instagram", "Weather", "Slack",
    "Spotify", "Trello",   "GitHub",  "Reddit",   "YouTube", "Pocket",    "Todoist", "Fitbit",
    "Strava",  "Flickr",   "Tumblr",  "WordPress", "Feedly", "Nest",      "Hue",     "Skype",
};

constexpr WordPair kTriggerVerbs[] = {
    {"new", "latest"},       {"liked", "loved"},    {"shared", "reposted"},  {"starred", "flagged"},
    {"tagged", "labeled"},   {"saved", "kept"},     {"updated", "edited"},   {"posted", "published"},
    {"archived", "shelved"}, {"pinned", "featured"},
};

constexpr WordPair kActionVerbs[] = {
    {"create", "make"},  {"send", "deliver"}, {"save", "store"},   {"add", "insert"},   {"upload", "push"},
    {"append", "attach"}, {"log", "record"},  {"start", "launch"}, {"post", "publish"}, {"play", "stream"},
};

constexpr WordPair kNouns[] = {
    {"photo", "picture"},     {"tweet", "chirp"},         {"note", "memo"},          {"email", "mail"},
    {"file", "attachment"},   {"song", "track"},          {"video", "clip"},         {"event", "appointment"},
    {"task", "chore"},        {"message", "text"},        {"link", "url"},           {"comment", "reply"},
    {"follower", "fan"},      {"mention", "shoutout"},    {"playlist", "mixtape"},   {"issue", "ticket"},
    {"article", "piece"},     {"reminder", "alert"},      {"forecast", "outlook"},   {"album", "collection"},
    {"contact", "person"},    {"bookmark", "favorite"},   {"checkin", "visit"},      {"invoice", "bill"},
    {"order", "purchase"},    {"podcast", "show"},        {"page", "site"},          {"card", "tile"},
    {"board", "wall"},        {"folder", "directory"},    {"workout", "exercise"},   {"light", "lamp"},
    {"alarm", "siren"},       {"thread", "discussion"},   {"repository", "repo"},    {"quote", "citation"},
    {"recipe", "dish"},       {"status", "state"},        {"location", "place"},     {"device", "gadget"},
    {"document", "paper"},    {"spreadsheet", "sheet"},   {"image", "graphic"},      {"question", "query"},
    {"review", "rating"},     {"deal", "offer"},          {"package", "parcel"},     {"trip", "journey"},
    {"goal", "target"},       {"meeting", "call"},        {"budget", "plan"},        {"story", "tale"},
    {"blog", "journal"},      {"calendar", "schedule"},   {"digest", "summary"},     {"receipt", "voucher"},
    {"delivery", "shipment"}, {"sensor", "detector"},
};

constexpr WordPair kPhraseParaphrases[] = {
    {"every time", "whenever"},
    {"account", "profile"},
    {"i specify", "i choose"},
    {"fire", "run"},
};

struct FunctionWords {
  std::string verb;
  std::string noun;
  std::string verb_syn;
  std::string noun_syn;
};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

template <std::size_t N>
const char* pick(const char* const (&options)[N], Rng& rng) {
  return options[rng.index(N)];
}

class Renderer {
 public:
  Renderer(const Ontology& ontology, const std::vector<FunctionWords>& words, double synonym_prob)
      : ontology_(ontology), words_(words), synonym_prob_(synonym_prob) {}

  Tokens function_mention(int fid, Rng& rng) const {
    const auto& w = words_[static_cast<std::size_t>(fid)];
    std::string verb = rng.bernoulli(synonym_prob_) ? w.verb_syn : w.verb;
    std::string noun = rng.bernoulli(synonym_prob_) ? w.noun_syn : w.noun;
    if (ontology_.function(fid).role == Role::Trigger) {
      static const char* const lead[] = {"", "a", "my"};
      std::string l = pick(lead, rng);
      return l.empty() ? Tokens{verb, noun} : Tokens{l, verb, noun};
    }
    static const char* const lead[] = {"", "a"};
    std::string l = pick(lead, rng);
    return l.empty() ? Tokens{verb, noun} : Tokens{verb, l, noun};
  }

  std::string channel_word(int cid) const { return lower(ontology_.channel(cid).name); }

  Tokens trigger_part(const Recipe& r, bool omit_c, bool omit_f, Rng& rng) const {
    Tokens out;
    auto c = channel_word(r.tc);
    if (!omit_f && !omit_c) {
      auto f = function_mention(r.tf, rng);
      if (rng.bernoulli(0.5)) {
        out = f;
        static const char* const prep[] = {"on", "from"};
        out.push_back(pick(prep, rng));
        out.push_back(c);
      } else {
        out = {c};
        out.insert(out.end(), f.begin(), f.end());
      }
    } else if (!omit_f) {
      out = function_mention(r.tf, rng);
    } else if (!omit_c) {
      static const char* const forms[] = {"something on", "activity on", "anything from"};
      out = tokenize(pick(forms, rng));
      out.push_back(c);
    } else {
      static const char* const forms[] = {"something happens", "anything happens", "it happens", "there is activity"};
      out = tokenize(pick(forms, rng));
    }
    return out;
  }

  Tokens action_part(const Recipe& r, bool omit_c, bool omit_f, Rng& rng) const {
    Tokens out;
    auto c = channel_word(r.ac);
    if (!omit_f && !omit_c) {
      auto f = function_mention(r.af, rng);
      if (rng.bernoulli(0.5)) {
        out = f;
        static const char* const prep[] = {"in", "on", "with"};
        out.push_back(pick(prep, rng));
        out.push_back(c);
      } else {
        out = {c};
        out.insert(out.end(), f.begin(), f.end());
      }
    } else if (!omit_f) {
      out = function_mention(r.af, rng);
    } else if (!omit_c) {
      static const char* const forms[] = {"use", "handle it with", "do it in"};
      out = tokenize(pick(forms, rng));
      out.push_back(c);
    } else {
      static const char* const forms[] = {"do something", "handle it", "let me know", "take care of it"};
      out = tokenize(pick(forms, rng));
    }
    return out;
  }

  static Tokens compose(const Tokens& x, const Tokens& y, Rng& rng) {
    auto cat = [](std::initializer_list<const Tokens*> parts) {
      Tokens t;
      for (const auto* p : parts) t.insert(t.end(), p->begin(), p->end());
      return t;
    };
    static const Tokens kIf{"if"}, kThen{"then"}, kWhen{"when"}, kComma{","}, kTo{"to"};
    switch (rng.index(6)) {
      case 0: return cat({&kIf, &x, &kThen, &y});
      case 1: return cat({&x, &kThen, &y});
      case 2: return cat({&kWhen, &x, &kComma, &y});
      case 3: return cat({&y, &kWhen, &x});
      case 4: return cat({&x, &kTo, &y});
      default: return cat({&y, &kIf, &x});
    }
  }

 private:
  const Ontology& ontology_;
  const std::vector<FunctionWords>& words_;
  double synonym_prob_;
};

}  // namespace

SyntheticWorld generate_synthetic(const SyntheticConfig& config) {
  if (config.channels == 0 || config.triggers_per_channel == 0 || config.actions_per_channel == 0)
    throw ValidationError("synthetic ontology needs at least one channel, trigger and action");
  if (config.omit_prob < 0.0 || config.omit_prob > 1.0) throw ValidationError("omit_prob must be in [0,1]");
  Rng rng(config.seed);

  std::vector<Channel> channels;
  for (std::size_t c = 0; c < config.channels; ++c) {
    std::string name = c < std::size(kChannelNames) ? kChannelNames[c] : "Service" + std::to_string(c);
    channels.push_back({static_cast<int>(c), name});
  }

  // Every function gets its own noun, so the noun alone identifies it.
  std::vector<std::size_t> noun_order(std::size(kNouns));
  for (std::size_t i = 0; i < noun_order.size(); ++i) noun_order[i] = i;
  rng.shuffle(noun_order);
  std::size_t next_noun = 0;
  auto fresh_noun = [&]() -> std::pair<std::string, std::string> {
    std::size_t k = next_noun++;
    if (k < noun_order.size()) return {kNouns[noun_order[k]].first, kNouns[noun_order[k]].second};
    return {"item" + std::to_string(k), "thing" + std::to_string(k)};
  };

  std::vector<FunctionDef> functions;
  std::vector<FunctionWords> words;
  for (std::size_t c = 0; c < config.channels; ++c) {
    const auto& cname = channels[c].name;
    for (std::size_t k = 0; k < config.triggers_per_channel + config.actions_per_channel; ++k) {
      bool trigger = k < config.triggers_per_channel;
      const auto& vp = trigger ? kTriggerVerbs[rng.index(std::size(kTriggerVerbs))]
                               : kActionVerbs[rng.index(std::size(kActionVerbs))];
      auto [noun, noun_syn] = fresh_noun();
      FunctionDef f;
      f.id = static_cast<int>(functions.size());
      f.channel_id = static_cast<int>(c);
      f.role = trigger ? Role::Trigger : Role::Action;
      f.name = capitalize(std::string(vp.first)) + " " + noun;
      f.official_description =
          trigger ? tokenize("This Trigger will fire every time there is a " + std::string(vp.first) + " " + noun +
                             " on your " + cname + " account.")
                  : tokenize("This Action will " + std::string(vp.first) + " a " + noun + " in the " + cname +
                             " account you specify.");
      functions.push_back(std::move(f));
      words.push_back({vp.first, noun, vp.second, noun_syn});
    }
  }

  SyntheticWorld world;
  world.ontology = Ontology(std::move(channels), std::move(functions));
  for (const auto& [p, q] : kPhraseParaphrases) world.paraphrases.add(p, q);
  for (const auto& w : words) {
    world.paraphrases.add(w.verb, w.verb_syn);
    world.paraphrases.add(w.noun, w.noun_syn);
  }

  const auto& onto = world.ontology;
  std::vector<std::vector<int>> triggers_of(config.channels), actions_of(config.channels);
  for (const auto& f : onto.functions())
    (f.role == Role::Trigger ? triggers_of : actions_of)[static_cast<std::size_t>(f.channel_id)].push_back(f.id);

  Renderer render(onto, words, config.synonym_prob);
  auto make_example = [&](Rng& r) {
    LabeledExample ex;
    ex.gold.tc = static_cast<int>(r.index(config.channels));
    ex.gold.tf = triggers_of[static_cast<std::size_t>(ex.gold.tc)][r.index(config.triggers_per_channel)];
    ex.gold.ac = static_cast<int>(r.index(config.channels));
    ex.gold.af = actions_of[static_cast<std::size_t>(ex.gold.ac)][r.index(config.actions_per_channel)];
    std::array<bool, 4> omit{};
    for (auto& o : omit) o = r.bernoulli(config.omit_prob);
    auto x = render.trigger_part(ex.gold, omit[0], omit[1], r);
    auto y = render.action_part(ex.gold, omit[2], omit[3], r);
    ex.description = Renderer::compose(x, y, r);
    ex.vague = omit;
    return ex;
  };

  Rng train_rng = Rng::derive(config.seed, 1);
  for (std::size_t i = 0; i < config.train; ++i) world.train.push_back(make_example(train_rng));
  Rng test_rng = Rng::derive(config.seed, 2);
  for (std::size_t i = 0; i < config.test; ++i) world.test.push_back(make_example(test_rng));
  return world;
}

}  // namespace iftx
