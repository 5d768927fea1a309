#include "iftx/bundle.hpp"

#include <sstream>

namespace iftx {

namespace {

const char* const kNamespaces[] = {"sup", "hrl", "fixed"};

std::optional<PolicyNet>& policy_slot(ModelBundle& b, const std::string& ns) {
  if (ns == "sup") return b.sup;
  if (ns == "hrl") return b.hrl;
  return b.fixed;
}

const std::optional<PolicyNet>& policy_slot(const ModelBundle& b, const std::string& ns) {
  return policy_slot(const_cast<ModelBundle&>(b), ns);
}

}  // namespace

Checkpoint to_checkpoint(const ModelBundle& bundle) {
  Checkpoint ckpt;
  auto& m = ckpt.metadata;
  m["format"] = "iftx-bundle";
  m["dims"] = bundle.dims.to_json();
  m["vocab"] = bundle.vocab.entries();
  std::ostringstream onto;
  write_ontology(bundle.ontology, onto);
  m["ontology"] = onto.str();
  m["rewards"] = {{"beta", bundle.rewards.beta}, {"gamma", bundle.rewards.gamma}};
  m["lam_rule_threshold"] = bundle.lam_rule_threshold;
  m["info"] = bundle.info;
  if (bundle.lam) ckpt.put_store("lam", bundle.lam->store);
  for (const char* ns : kNamespaces) {
    const auto& slot = policy_slot(bundle, ns);
    if (!slot) continue;
    ckpt.put_store(ns, slot->store);
    m["w_d"][ns] = slot->w_d;
  }
  return ckpt;
}

ModelBundle from_checkpoint(const Checkpoint& ckpt) {
  const auto& m = ckpt.metadata;
  if (m.value("format", "") != "iftx-bundle") throw ParseError("checkpoint is not a model bundle");
  ModelBundle b;
  try {
    b.dims = ModelDims::from_json(m.at("dims"));
    b.vocab = Vocabulary(m.at("vocab").get<std::vector<std::string>>());
    std::istringstream onto(m.at("ontology").get<std::string>());
    b.ontology = parse_ontology(onto);
    b.rewards.beta = m.at("rewards").at("beta").get<double>();
    b.rewards.gamma = m.at("rewards").at("gamma").get<double>();
    b.lam_rule_threshold = m.at("lam_rule_threshold").get<double>();
    b.info = m.value("info", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bundle metadata: ") + e.what());
  }
  if (b.vocab.size() != b.dims.vocab) throw IntegrityError("bundle vocabulary does not match its dimensions");
  if (ckpt.has_store("lam")) b.lam = LamNet::bind(ckpt.get_store("lam"), b.dims);
  for (const char* ns : kNamespaces) {
    if (!ckpt.has_store(ns)) continue;
    auto net = PolicyNet::bind(ckpt.get_store(ns), b.dims);
    if (m.contains("w_d") && m["w_d"].contains(ns)) net.w_d = m["w_d"][ns].get<std::array<double, 4>>();
    policy_slot(b, ns) = std::move(net);
  }
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  save_checkpoint(to_checkpoint(bundle), path);
}

ModelBundle load_bundle(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

bool has_agent(const ModelBundle& bundle, AgentKind kind) {
  switch (kind) {
    case AgentKind::Lam:
    case AgentKind::LamRule:
      return bundle.lam.has_value();
    case AgentKind::LamSup:
      return bundle.sup.has_value();
    case AgentKind::HrlFixedOrder:
      return bundle.fixed.has_value();
    case AgentKind::Hrl:
      return bundle.hrl.has_value();
  }
  return false;
}

std::unique_ptr<Controller> make_controller(const ModelBundle& bundle, AgentKind kind) {
  if (!has_agent(bundle, kind))
    throw NotFoundError("checkpoint has no parameters for agent " + std::string(agent_name(kind)));
  switch (kind) {
    case AgentKind::Lam:
      return std::make_unique<LamController>(*bundle.lam, bundle.ontology, bundle.vocab);
    case AgentKind::LamRule:
      return std::make_unique<LamRuleController>(*bundle.lam, bundle.ontology, bundle.vocab,
                                                 bundle.lam_rule_threshold);
    case AgentKind::LamSup:
      return std::make_unique<HrlController>(*bundle.sup, bundle.ontology, bundle.vocab, lam_sup_options());
    case AgentKind::HrlFixedOrder:
      return std::make_unique<HrlController>(*bundle.fixed, bundle.ontology, bundle.vocab, fixed_order_options());
    case AgentKind::Hrl:
      return std::make_unique<HrlController>(*bundle.hrl, bundle.ontology, bundle.vocab, HrlOptions{});
  }
  throw ContractViolation("unhandled agent kind");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.ontology = load_ontology(dir / "ontology.jsonl");
  d.train = load_corpus(dir / "train.jsonl", d.ontology);
  d.test = load_corpus(dir / "test.jsonl", d.ontology);
  if (std::filesystem::exists(dir / "paraphrases.tsv")) d.paraphrases = load_paraphrases(dir / "paraphrases.tsv");
  if (std::filesystem::exists(dir / "bank.jsonl")) d.bank = load_answer_bank(dir / "bank.jsonl");
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_ontology(d.ontology, dir / "ontology.jsonl");
  save_corpus(d.train, dir / "train.jsonl");
  save_corpus(d.test, dir / "test.jsonl");
  save_paraphrases(d.paraphrases, dir / "paraphrases.tsv");
  if (d.bank) save_answer_bank(*d.bank, dir / "bank.jsonl");
}

ModelBundle pretrain_bundle(const Dataset& data, const PretrainConfig& cfg) {
  if (!data.bank) throw StateError("the data directory has no answer bank; run build-bank first");
  const auto extra = simulator_texts(data.ontology, *data.bank);
  ModelBundle b;
  b.ontology = data.ontology;
  b.vocab = build_vocabulary(data.train, extra, cfg.min_count);
  b.dims = cfg.dims;
  b.dims.vocab = b.vocab.size();
  b.lam_rule_threshold = cfg.lam_rule_threshold;
  const auto counts = value_counts(b.ontology);

  b.lam = LamNet::create(b.dims, counts, Rng::derive(cfg.seed, 1).next());
  auto lam_cfg = cfg.lam;
  lam_cfg.seed = Rng::derive(cfg.seed, 2).next();
  const auto lam_losses = train_lam(data.train, *b.lam, b.ontology, b.vocab, lam_cfg);

  const UserSimulator sim(b.ontology, *data.bank);
  const Environment env(b.ontology, b.rewards);
  const LamRuleController rule(*b.lam, b.ontology, b.vocab, cfg.lam_rule_threshold);
  const auto sup_data = collect_supervised_data(data.train, rule, env, sim, Rng::derive(cfg.seed, 3).next());

  b.sup = PolicyNet::create(b.dims, counts, Rng::derive(cfg.seed, 4).next());
  copy_description_encoders(*b.lam, *b.sup);
  auto sup_cfg = cfg.sup;
  sup_cfg.seed = Rng::derive(cfg.seed, 5).next();
  const auto sup_losses = pretrain_supervised(sup_data, *b.sup, b.vocab, sup_cfg);

  std::array<std::size_t, 4> sizes{};
  for (std::size_t i = 0; i < 4; ++i) sizes[i] = sup_data[i].size();
  b.info["pretrain"] = {{"seed", cfg.seed},
                        {"lam_losses", lam_losses},
                        {"sup_losses", sup_losses},
                        {"sup_examples", sizes}};
  return b;
}

TrainResult train_agent(ModelBundle& bundle, const Dataset& data, AgentKind kind, TrainConfig cfg,
                        const std::function<void(const MetricsRecord&)>& on_metrics) {
  if (kind != AgentKind::Hrl && kind != AgentKind::HrlFixedOrder)
    throw ValidationError("only hrl and hrl-fixed are trained with reinforcement learning");
  if (!bundle.sup) throw StateError("the checkpoint has no supervised policy; run pretrain first");
  if (!data.bank) throw StateError("the data directory has no answer bank; run build-bank first");
  if (kind == AgentKind::HrlFixedOrder) {
    cfg.order = OrderMode::Fixed;
    cfg.train_high = false;
  } else {
    cfg.order = OrderMode::Learned;
  }
  PolicyNet net = *bundle.sup;
  const UserSimulator sim(bundle.ontology, *data.bank);
  auto result = train_hrl(cfg, data.train, data.train, sim, net, bundle.ontology, bundle.vocab, on_metrics);
  const std::string ns = kind == AgentKind::Hrl ? "hrl" : "fixed";
  bundle.info["train_" + ns] = {{"episodes", cfg.episodes},
                                {"seed", cfg.seed},
                                {"beta", cfg.rewards.beta},
                                {"gamma", cfg.rewards.gamma},
                                {"updates", result.updates},
                                {"best_update", result.best_update},
                                {"best_validation", result.best_validation},
                                {"diverged", result.diverged}};
  bundle.rewards = cfg.rewards;
  policy_slot(bundle, ns) = std::move(net);
  return result;
}

}  // namespace iftx
