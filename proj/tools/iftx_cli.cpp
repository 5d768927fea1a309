// iftx: command-line driver for data generation, training, evaluation and the
// live session service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "iftx/bundle.hpp"
#include "iftx/evaluation.hpp"
#include "iftx/server.hpp"
#include "iftx/synthetic.hpp"

namespace {

using namespace iftx;
using nlohmann::json;

struct Common {
  std::uint64_t seed = 1;
  std::optional<double> beta, gamma;
  std::string config;
  std::string checkpoint;
  std::string out;
  std::string data;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  try {
    auto j = json::parse(in);
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
}

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void apply(const json& j, SupervisedConfig& c) {
  take(j, "epochs", c.epochs);
  take(j, "learning_rate", c.learning_rate);
  take(j, "batch", c.batch);
  take(j, "clip_norm", c.clip_norm);
  take(j, "shards", c.shards);
}

void apply(const json& j, TrainConfig& c) {
  take(j, "episodes", c.episodes);
  take(j, "learning_rate", c.learning_rate);
  take(j, "batch", c.batch);
  take(j, "validation_every", c.validation_every);
  take(j, "validation_size", c.validation_size);
  take(j, "use_mask", c.use_mask);
  take(j, "moving_average_baseline", c.moving_average_baseline);
  take(j, "baseline_decay", c.baseline_decay);
  take(j, "per_step_high_discount", c.per_step_high_discount);
  take(j, "clip_norm", c.clip_norm);
  take(j, "shards", c.shards);
  take(j, "log_every", c.log_every);
  take(j, "beta", c.rewards.beta);
  take(j, "gamma", c.rewards.gamma);
}

void apply(const json& j, SyntheticConfig& c) {
  take(j, "channels", c.channels);
  take(j, "triggers_per_channel", c.triggers_per_channel);
  take(j, "actions_per_channel", c.actions_per_channel);
  take(j, "train", c.train);
  take(j, "test", c.test);
  take(j, "omit_prob", c.omit_prob);
  take(j, "synonym_prob", c.synonym_prob);
}

std::string checkpoint_path(const Common& c) {
  if (const char* env = std::getenv("IFTX_CHECKPOINT"); env && *env) return env;
  if (c.checkpoint.empty()) throw ValidationError("--checkpoint (or IFTX_CHECKPOINT) is required");
  return c.checkpoint;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string(flag) + " is required");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

RewardConfig rewards_of(const Common& c, RewardConfig base) {
  if (c.beta) base.beta = *c.beta;
  if (c.gamma) base.gamma = *c.gamma;
  base.validate();
  return base;
}

std::vector<LabeledExample> select_split(const std::vector<LabeledExample>& xs, const std::string& split) {
  if (split == "all") return xs;
  const auto s = split_test_set(xs);
  const std::vector<std::size_t>* idx = nullptr;
  std::vector<std::size_t> vague;
  if (split == "ci") idx = &s.ci;
  else if (split == "vi12") idx = &s.vi12;
  else if (split == "vi34") idx = &s.vi34;
  else if (split == "vague") idx = &(vague = s.vague());
  else throw ValidationError("unknown split '" + split + "' (expected ci, vi12, vi34, vague, all)");
  std::vector<LabeledExample> out;
  for (auto k : *idx) out.push_back(xs[k]);
  return out;
}

json transcript_json(const std::vector<std::pair<std::string, std::string>>& t) {
  auto j = json::array();
  for (const auto& [who, text] : t) j.push_back({{"speaker", who}, {"text", text}});
  return j;
}

SessionServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive If-Then recipe parser"};
  app.require_subcommand(1);
  Common c;
  auto common = [&c](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--beta", c.beta, "AskUser penalty");
    sub->add_option("--gamma", c.gamma, "Discount factor");
    sub->add_option("--config", c.config, "JSON file with hyperparameter overrides");
    sub->add_option("--checkpoint", c.checkpoint, "Model checkpoint (IFTX_CHECKPOINT overrides)");
    sub->add_option("--out", c.out, "Output path");
    sub->add_option("--data", c.data, "Data directory");
  };

  auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic ontology and corpus");
  common(gen);
  auto* bank = app.add_subcommand("build-bank", "Build the simulated-user answer bank");
  common(bank);
  auto* pre = app.add_subcommand("pretrain", "Train LAM and the supervised policies");
  common(pre);
  auto* train = app.add_subcommand("train", "REINFORCE training of hrl or hrl-fixed");
  common(train);
  std::string agent = "hrl", split = "all", metrics_path;
  std::size_t episodes = 0, runs = 10, recipe_id = 0, questions = 5;
  bool episodes_set = false;
  train->add_option("--agent", agent, "hrl or hrl-fixed");
  train->add_option("--episodes", episodes, "Training episodes")->each([&](const std::string&) {
    episodes_set = true;
  });
  train->add_option("--metrics", metrics_path, "Line-delimited metrics log");
  auto* ev = app.add_subcommand("eval", "Evaluate an agent on the test set");
  common(ev);
  ev->add_option("--agent", agent, "lam, lam-rule, lam-sup, hrl-fixed or hrl");
  ev->add_option("--split", split, "ci, vi12, vi34, vague or all");
  ev->add_option("--runs", runs, "Repetitions with fresh simulator randomness");
  ev->add_option("--max-questions", questions, "Questions allowed per subtask");
  auto* sim = app.add_subcommand("simulate", "Run one simulated episode and print its transcript");
  common(sim);
  sim->add_option("--agent", agent, "Agent name");
  sim->add_option("--recipe-id", recipe_id, "Index into the test set");
  sim->add_option("--split", split, "Take the recipe from this split");
  auto* serve = app.add_subcommand("serve", "HTTP session service");
  common(serve);
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t cap = 1;
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--max-questions", cap, "Questions allowed per subtask");
  auto* chat = app.add_subcommand("chat", "Terminal clarification session");
  common(chat);
  chat->add_option("--agent", agent, "Agent name");
  chat->add_option("--max-questions", cap, "Questions allowed per subtask");

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = read_config(c.config);
    if (gen->parsed()) {
      require(c.out, "--out");
      SyntheticConfig sc;
      apply(cfg, sc);
      sc.seed = c.seed;
      auto world = generate_synthetic(sc);
      Dataset d{world.ontology, world.train, world.test, world.paraphrases, std::nullopt};
      save_dataset(d, c.out);
      std::cout << "wrote " << d.train.size() << " train / " << d.test.size() << " test recipes to " << c.out
                << '\n';
    } else if (bank->parsed()) {
      require(c.data, "--data");
      auto d = load_dataset(c.data);
      Rng rng(c.seed);
      BankOptions opts;
      take(cfg, "max_paraphrase_variants", opts.max_paraphrase_variants);
      take(cfg, "max_extractions", opts.max_extractions);
      auto built = build_answer_bank(d.ontology, d.train, d.paraphrases, rng, opts);
      const auto out = c.out.empty() ? std::filesystem::path(c.data) / "bank.jsonl" : std::filesystem::path(c.out);
      save_answer_bank(built.bank, out);
      std::cout << "answer bank: " << built.bank.num_functions() << " functions, mean size " << built.bank.mean_size()
                << ", " << built.fallback_functions.size() << " name fallbacks -> " << out.string() << '\n';
    } else if (pre->parsed()) {
      require(c.data, "--data");
      require(c.out, "--out");
      auto d = load_dataset(c.data);
      PretrainConfig pc;
      pc.seed = c.seed;
      if (cfg.contains("lam")) apply(cfg["lam"], pc.lam);
      if (cfg.contains("sup")) apply(cfg["sup"], pc.sup);
      take(cfg, "lam_rule_threshold", pc.lam_rule_threshold);
      take(cfg, "min_count", pc.min_count);
      auto b = pretrain_bundle(d, pc);
      b.rewards = rewards_of(c, b.rewards);
      save_bundle(b, c.out);
      std::cout << "pretrained bundle -> " << c.out << " (" << checkpoint_hash(c.out) << ")\n";
    } else if (train->parsed()) {
      require(c.data, "--data");
      require(c.out, "--out");
      const auto kind = parse_agent(agent);
      auto d = load_dataset(c.data);
      auto b = load_bundle(checkpoint_path(c));
      TrainConfig tc;
      apply(cfg, tc);
      if (episodes_set) tc.episodes = episodes;
      tc.seed = c.seed;
      tc.rewards = rewards_of(c, tc.rewards);
      std::ofstream metrics;
      if (!metrics_path.empty()) {
        metrics.open(metrics_path);
        if (!metrics) throw Error("cannot write " + metrics_path);
      }
      auto result = train_agent(b, d, kind, tc, [&](const MetricsRecord& m) {
        const auto line = metrics_to_json(m).dump();
        if (metrics.is_open()) metrics << line << '\n';
        std::cerr << line << '\n';
      });
      save_bundle(b, c.out);
      std::cout << "trained " << agent << ": " << result.updates << " updates, best validation "
                << result.best_validation << " at update " << result.best_update
                << (result.diverged ? " (diverged: " + result.divergence_message + ")" : "") << " -> " << c.out
                << '\n';
    } else if (ev->parsed()) {
      require(c.data, "--data");
      const auto kind = parse_agent(agent);
      auto d = load_dataset(c.data);
      if (!d.bank) throw StateError("the data directory has no answer bank; run build-bank first");
      auto b = load_bundle(checkpoint_path(c));
      auto ctrl = make_controller(b, kind);
      const Environment env(b.ontology, rewards_of(c, b.rewards));
      const UserSimulator simu(b.ontology, *d.bank);
      const auto examples = select_split(d.test, split);
      EvalOptions eo;
      eo.runs = runs;
      eo.seed = c.seed;
      eo.max_questions_per_subtask = questions;
      auto report = run_eval(agent, env, *ctrl, examples, simu, eo);
      std::cout << report_table(report);
      if (!c.out.empty()) write_text(c.out, report_to_json(report).dump(2) + "\n");
    } else if (sim->parsed()) {
      require(c.data, "--data");
      const auto kind = parse_agent(agent);
      auto d = load_dataset(c.data);
      if (!d.bank) throw StateError("the data directory has no answer bank; run build-bank first");
      auto b = load_bundle(checkpoint_path(c));
      auto ctrl = make_controller(b, kind);
      const Environment env(b.ontology, rewards_of(c, b.rewards));
      const UserSimulator simu(b.ontology, *d.bank);
      const auto examples = select_split(d.test, split);
      if (recipe_id >= examples.size()) throw ValidationError("--recipe-id is out of range");
      const auto& ex = examples[recipe_id];
      auto out = simulate_episode(env, *ctrl, ex, simu, policy_stream(c.seed, recipe_id),
                                  answer_stream(c.seed, recipe_id));
      json j;
      j["agent"] = agent;
      j["recipe_id"] = recipe_id;
      j["transcript"] = transcript_json(out.transcript);
      auto p = json::array();
      for (const auto& v : out.predictions) p.push_back(v ? json(*v) : json(nullptr));
      j["prediction"] = p;
      j["gold"] = {ex.gold.tc, ex.gold.tf, ex.gold.ac, ex.gold.af};
      j["reward"] = out.trace.total_reward();
      j["options"] = json::array();
      for (const auto& o : out.trace.options) j["options"].push_back(option_to_json(o));
      write_text(c.out, j.dump(2) + "\n");
    } else if (serve->parsed()) {
      const auto path = checkpoint_path(c);
      auto b = load_bundle(path);
      SessionConfig sc;
      sc.max_questions_per_subtask = cap;
      SessionStore store(b, sc);
      SessionServer server(store, checkpoint_hash(path));
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      server.listen();
    } else if (chat->parsed()) {
      auto b = load_bundle(checkpoint_path(c));
      SessionConfig sc;
      sc.max_questions_per_subtask = cap;
      SessionStore store(b, sc);
      std::cout << "Describe the recipe: " << std::flush;
      std::string line;
      if (!std::getline(std::cin, line)) return 0;
      auto view = store.create(line, parse_agent(agent));
      while (view.status == SessionStatus::AwaitingAnswer) {
        std::cout << *view.question << "\n> " << std::flush;
        if (!std::getline(std::cin, line)) return 0;
        try {
          view = store.answer(view.id, line);
        } catch (const ValidationError& e) {
          std::cout << e.what() << '\n';
        }
      }
      std::cout << store.prediction_json(view.prediction).dump(2) << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
