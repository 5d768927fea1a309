#include "iftx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>

namespace iftx {

namespace {

// Runs fn(item, sink) over [0, n) split into a fixed number of contiguous
// shards, each with a private gradient accumulator. Shards are merged into
// `total` in shard order, so the result does not depend on the thread count.
template <typename Fn>
double sharded_accumulate(std::vector<Gradients>& shard_grads, Gradients& total, std::size_t n, Fn&& fn) {
  const std::size_t shards = shard_grads.size();
  std::vector<double> loss(shards, 0.0);
  std::exception_ptr error;
  const auto s_count = static_cast<std::ptrdiff_t>(shards);
#pragma omp parallel for schedule(static, 1)
  for (std::ptrdiff_t s = 0; s < s_count; ++s) {
    const auto u = static_cast<std::size_t>(s);
    try {
      shard_grads[u].zero();
      for (std::size_t k = u * n / shards; k < (u + 1) * n / shards; ++k) loss[u] += fn(k, shard_grads[u]);
    } catch (...) {
#pragma omp critical(iftx_trainer_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  double sum = 0.0;
  for (std::size_t s = 0; s < shards; ++s) {
    total.add(shard_grads[s]);
    sum += loss[s];
  }
  return sum;
}

std::vector<Gradients> make_shards(const ParamStore& store, std::size_t shards) {
  return std::vector<Gradients>(std::max<std::size_t>(shards, 1), Gradients(store));
}

void apply_update(ParamStore& store, double lr, double clip) {
  if (clip > 0.0) clip_global_norm(store.grads(), clip);
  sgd_ascent_update(store, lr);
}

void check_supervised(const SupervisedConfig& c) {
  if (c.batch == 0) throw ValidationError("batch size must be positive");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate))
    throw ValidationError("learning rate must be positive");
}

ParseState answers_only_state(const Tokens& description, std::size_t slot, const Tokens& answers) {
  ParseState s;
  s.description = description;
  s.answers[slot] = answers;
  return s;
}

// Minibatch ascent on Σ log p(target); fn(tape, k) returns the log-likelihood
// Var of example k.
template <typename LogLik>
double supervised_epoch(ParamStore& store, std::vector<Gradients>& shards, std::vector<std::size_t>& order,
                        const SupervisedConfig& cfg, Rng& rng, LogLik&& loglik) {
  rng.shuffle(order);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
    const std::size_t n = std::min(cfg.batch, order.size() - start);
    const double ll = sharded_accumulate(shards, store.grads(), n, [&](std::size_t k, Gradients& sink) {
      Tape tape(store);
      Var l = loglik(tape, order[start + k]);
      const double v = tape.scalar(l);
      tape.backward(tape.scale(l, 1.0 / static_cast<double>(n)), sink);
      return v;
    });
    if (!std::isfinite(ll)) throw NumericError("supervised training produced a non-finite loss");
    total -= ll;
    apply_update(store, cfg.learning_rate, cfg.clip_norm);
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

}  // namespace

SupervisedData collect_supervised_data(std::span<const LabeledExample> corpus, const LamRuleController& lam_rule,
                                       const Environment& env, const AnswerProvider& answers, std::uint64_t seed) {
  const auto outcomes = rollout_parallel(env, lam_rule, corpus, answers, seed);
  const auto& ontology = env.ontology();
  SupervisedData data;
  for (std::size_t e = 0; e < corpus.size(); ++e) {
    const auto& ex = corpus[e];
    for (const auto& opt : outcomes[e].trace.options) {
      if (opt.noop) continue;
      const auto i = index_of(opt.subtask);
      const int k = ontology.value_index(i, ex.gold.component(i));
      if (k < 0) throw IntegrityError("gold value outside the ontology");
      const auto target = static_cast<std::size_t>(k);
      Tokens d;
      bool asked = false;
      for (const auto& s : opt.steps)
        if (s.action.ask) {
          asked = true;
          d.insert(d.end(), s.answer.begin(), s.answer.end());
        }
      if (!asked) {
        data[i].push_back({ex.description, {}, target});
      } else {
        data[i].push_back({ex.description, {}, ontology.values(i).size()});
        data[i].push_back({ex.description, std::move(d), target});
      }
    }
  }
  return data;
}

std::vector<double> pretrain_supervised(const SupervisedData& data, PolicyNet& net, const Vocabulary& vocab,
                                        const SupervisedConfig& cfg) {
  check_supervised(cfg);
  auto shards = make_shards(net.store, cfg.shards);
  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& set = data[i];
      std::vector<std::size_t> order(set.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng = Rng::derive(cfg.seed, epoch * 4 + i);
      const auto g = subtask_at(i);
      sum += supervised_epoch(net.store, shards, order, cfg, rng, [&](Tape& tape, std::size_t k) {
        const auto& ex = set[k];
        Var v_I = encode_description(tape, net.low[i].desc, vocab.encode(ex.description)).v;
        auto state = answers_only_state(ex.description, i, ex.answers);
        auto out = low_distribution(tape, net, g, v_I, vocab, state, false);
        return log_prob(tape, out.dist, ex.target);
      });
    }
    losses.push_back(sum / 4.0);
  }
  return losses;
}

std::vector<double> train_lam(std::span<const LabeledExample> corpus, LamNet& net, const Ontology& ontology,
                              const Vocabulary& vocab, const SupervisedConfig& cfg) {
  check_supervised(cfg);
  auto shards = make_shards(net.store, cfg.shards);
  std::vector<std::vector<int>> ids;
  ids.reserve(corpus.size());
  for (const auto& ex : corpus) ids.push_back(vocab.encode(ex.description));
  std::array<std::vector<std::size_t>, 4> targets;
  for (std::size_t i = 0; i < 4; ++i)
    for (const auto& ex : corpus) {
      const int k = ontology.value_index(i, ex.gold.component(i));
      if (k < 0) throw IntegrityError("gold value outside the ontology");
      targets[i].push_back(static_cast<std::size_t>(k));
    }
  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<std::size_t> order(corpus.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng = Rng::derive(cfg.seed, epoch * 4 + i);
      sum += supervised_epoch(net.store, shards, order, cfg, rng, [&](Tape& tape, std::size_t k) {
        auto d = lam_distribution(tape, net, subtask_at(i), ids[k]);
        return log_prob(tape, d, targets[i][k]);
      });
    }
    losses.push_back(sum / 4.0);
  }
  return losses;
}

std::vector<double> returns_high(const EpisodeTrace& trace, double gamma, bool per_step) {
  const auto& opts = trace.options;
  std::vector<double> u(opts.size(), 0.0);
  for (std::size_t n = opts.size(); n-- > 0;) {
    double acc = opts[n].high_reward;
    for (std::size_t m = n + 1; m < opts.size(); ++m) {
      const double e = per_step ? static_cast<double>(opts[m].start_step - opts[n].start_step)
                                : static_cast<double>(m - n);
      acc += std::pow(gamma, e) * opts[m].high_reward;
    }
    u[n] = acc;
  }
  return u;
}

std::vector<double> returns_low(const OptionRecord& option, double gamma) {
  std::vector<double> u(option.steps.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = option.steps.size(); t-- > 0;) {
    acc = option.steps[t].reward + gamma * acc;
    u[t] = acc;
  }
  return u;
}

nlohmann::json metrics_to_json(const MetricsRecord& m) {
  nlohmann::json j{{"episode", m.episode}, {"mean_rh", m.mean_rh}, {"mean_asks", m.mean_asks}};
  j["val_reward"] = m.val_reward ? nlohmann::json(*m.val_reward) : nlohmann::json(nullptr);
  return j;
}

double validation_reward(const Environment& env, const Controller& controller,
                         std::span<const LabeledExample> examples, const AnswerProvider& answers, std::uint64_t seed,
                         std::size_t max_questions_per_subtask) {
  if (examples.empty()) return 0.0;
  EpisodeOptions opts;
  opts.max_questions_per_subtask = max_questions_per_subtask;
  const auto outs = rollout_parallel(env, controller, examples, answers, seed, opts);
  double sum = 0.0;
  for (const auto& o : outs) sum += o.trace.total_reward();
  return sum / static_cast<double>(outs.size());
}

namespace {

struct SurrogateTerms {
  std::vector<Var> vars;
  std::vector<double> weights;
};

// Collects u · log π terms from a finished runner.
void gather_terms(const EpisodeRunner& runner, const EpisodeTrace& trace, double gamma, bool include_high,
                  bool include_low, bool per_step_high, double high_baseline, double low_baseline,
                  SurrogateTerms& out) {
  const auto& hi = runner.high_terms();
  const auto& lo = runner.low_terms();
  if (hi.size() != trace.options.size() || lo.size() != trace.options.size())
    throw ContractViolation("rollout terms do not line up with the trace");
  if (include_high) {
    const auto u = returns_high(trace, gamma, per_step_high);
    for (std::size_t n = 0; n < hi.size(); ++n)
      if (hi[n].valid()) {
        out.vars.push_back(hi[n]);
        out.weights.push_back(u[n] - high_baseline);
      }
  }
  if (include_low) {
    for (std::size_t n = 0; n < lo.size(); ++n) {
      const auto u = returns_low(trace.options[n], gamma);
      for (std::size_t t = 0; t < lo[n].size(); ++t)
        if (lo[n][t].valid()) {
          if (trace.options[n].steps[t].forced) throw ContractViolation("forced step carries a policy term");
          out.vars.push_back(lo[n][t]);
          out.weights.push_back(u[t] - low_baseline);
        }
    }
  }
}

struct EpisodeStats {
  double total_reward = 0.0;
  std::size_t asks = 0;
  double high_return_sum = 0.0;
  std::size_t high_terms = 0;
  double low_return_sum = 0.0;
  std::size_t low_terms = 0;
};

}  // namespace

TrainResult train_hrl(const TrainConfig& cfg, std::span<const LabeledExample> train,
                      std::span<const LabeledExample> validation, const AnswerProvider& answers, PolicyNet& net,
                      const Ontology& ontology, const Vocabulary& vocab,
                      const std::function<void(const MetricsRecord&)>& on_metrics) {
  cfg.rewards.validate();
  if (cfg.batch == 0) throw ValidationError("batch size must be positive");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
    throw ValidationError("learning rate must be positive");
  if (cfg.episodes > 0 && train.empty()) throw ValidationError("training set is empty");
  if (cfg.validation_every == 0) throw ValidationError("validation interval must be positive");

  const Environment env(ontology, cfg.rewards);
  HrlOptions hopts{cfg.order, cfg.use_mask, true};
  HrlController ctrl(net, ontology, vocab, hopts);

  std::vector<LabeledExample> val_set(validation.begin(), validation.end());
  if (val_set.size() > cfg.validation_size) {
    Rng pick = Rng::derive(cfg.seed, 0x76616cULL);
    pick.shuffle(val_set);
    val_set.resize(cfg.validation_size);
  }
  const std::uint64_t val_seed = Rng::derive(cfg.seed, 0x7631ULL).next();
  auto validate = [&] { return validation_reward(env, ctrl, val_set, answers, val_seed); };

  TrainResult result;
  ParamStore best = net.store;
  result.best_validation = validate();
  result.best_update = 0;

  const std::size_t updates = cfg.episodes / cfg.batch;
  auto shards = make_shards(net.store, cfg.shards);
  Rng pick_rng = Rng::derive(cfg.seed, 0x7069636bULL);
  double high_baseline = 0.0, low_baseline = 0.0;
  bool baseline_ready = false;
  double window_reward = 0.0, window_asks = 0.0;
  std::size_t window_eps = 0;
  bool validated_last = true;

  for (std::size_t u = 0; u < updates; ++u) {
    // Overflowing logits, gradients or parameters end the run; the best
    // validated parameters so far are kept.
    try {
      std::vector<std::size_t> picks(cfg.batch);
      for (auto& p : picks) p = pick_rng.index(train.size());
      std::vector<EpisodeStats> stats(cfg.batch);
      const double hb = baseline_ready ? high_baseline : 0.0;
      const double lb = baseline_ready ? low_baseline : 0.0;

      EpisodeOptions eopts;
      eopts.sample = true;
      eopts.record = true;
      sharded_accumulate(shards, net.store.grads(), cfg.batch, [&](std::size_t b, Gradients& sink) {
        const std::uint64_t k = u * cfg.batch + b;
        const auto& ex = train[picks[b]];
        EpisodeRunner runner(env, ctrl, ex.description, ex.gold, policy_stream(cfg.seed, k), eopts);
        Rng arng = answer_stream(cfg.seed, k);
        for (auto ev = runner.advance(); ev.kind == EventKind::Question; ev = runner.advance())
          runner.answer(answers.answer(ev.subtask, ex.gold, arng));
        const auto& trace = runner.trace();
        auto& st = stats[b];
        st.total_reward = trace.total_reward();
        st.asks = trace.asks();
        const auto uh = returns_high(trace, cfg.rewards.gamma, cfg.per_step_high_discount);
        for (std::size_t n = 0; n < uh.size(); ++n)
          if (runner.high_terms()[n].valid()) {
            st.high_return_sum += uh[n];
            ++st.high_terms;
          }
        for (std::size_t n = 0; n < trace.options.size(); ++n) {
          const auto ul = returns_low(trace.options[n], cfg.rewards.gamma);
          for (std::size_t t = 0; t < runner.low_terms()[n].size(); ++t) {
            st.low_return_sum += ul[t];
            ++st.low_terms;
          }
        }
        SurrogateTerms terms;
        const bool mab = cfg.moving_average_baseline;
        gather_terms(runner, trace, cfg.rewards.gamma, cfg.train_high, cfg.train_low, cfg.per_step_high_discount,
                     mab ? hb : 0.0, mab ? lb : 0.0, terms);
        if (!terms.vars.empty()) {
          auto& tape = runner.context().tape;
          Var j = weighted_sum(tape, terms.vars, terms.weights);
          tape.backward(j, sink);
        }
        return 0.0;
      });

      double hsum = 0.0, lsum = 0.0;
      std::size_t hn = 0, ln = 0;
      for (const auto& st : stats) {
        result.episode_rewards.push_back(st.total_reward);
        window_reward += st.total_reward;
        window_asks += static_cast<double>(st.asks);
        ++window_eps;
        hsum += st.high_return_sum;
        hn += st.high_terms;
        lsum += st.low_return_sum;
        ln += st.low_terms;
      }

      if (!net.store.grads().all_finite()) throw NumericError("non-finite policy gradient");
      apply_update(net.store, cfg.learning_rate, cfg.clip_norm);
      if (!net.store.all_finite()) throw NumericError("non-finite parameters after update");
      result.updates = u + 1;

      if (cfg.moving_average_baseline) {
        const double mh = hn ? hsum / static_cast<double>(hn) : 0.0;
        const double ml = ln ? lsum / static_cast<double>(ln) : 0.0;
        if (!baseline_ready) {
          high_baseline = mh;
          low_baseline = ml;
          baseline_ready = true;
        } else {
          high_baseline = cfg.baseline_decay * high_baseline + (1.0 - cfg.baseline_decay) * mh;
          low_baseline = cfg.baseline_decay * low_baseline + (1.0 - cfg.baseline_decay) * ml;
        }
      }

      validated_last = false;
      std::optional<double> val;
      if ((u + 1) % cfg.validation_every == 0) {
        val = validate();
        validated_last = true;
        if (*val > result.best_validation) {
          result.best_validation = *val;
          result.best_update = u + 1;
          best = net.store;
        }
      }
      const bool log_now = cfg.log_every > 0 && (u + 1) % cfg.log_every == 0;
      if (log_now || val) {
        MetricsRecord m;
        m.episode = (u + 1) * cfg.batch;
        m.mean_rh = window_eps ? window_reward / static_cast<double>(window_eps) : 0.0;
        m.mean_asks = window_eps ? window_asks / static_cast<double>(window_eps) : 0.0;
        m.val_reward = val;
        result.metrics.push_back(m);
        if (on_metrics) on_metrics(m);
        window_reward = window_asks = 0.0;
        window_eps = 0;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.divergence_message = e.what();
      net.store.grads().zero();
      break;
    }
  }

  if (!validated_last && !result.diverged) {
    const double val = validate();
    if (val > result.best_validation) {
      result.best_validation = val;
      result.best_update = result.updates;
      best = net.store;
    }
  }
  for (ParamId k = 0; k < net.store.size(); ++k) net.store.value(k) = best.value(k);
  return result;
}

namespace {

class ReplayAnswers {
 public:
  explicit ReplayAnswers(const EpisodeTrace& trace) {
    for (const auto& o : trace.options)
      for (const auto& s : o.steps)
        if (s.action.ask) queue_.push_back(s.answer);
  }
  Tokens next() {
    if (pos_ >= queue_.size()) throw ContractViolation("replay ran out of recorded answers");
    return queue_[pos_++];
  }

 private:
  std::vector<Tokens> queue_;
  std::size_t pos_ = 0;
};

void check_replay(const EpisodeTrace& recorded, const EpisodeTrace& replayed) {
  bool same = recorded.options.size() == replayed.options.size();
  for (std::size_t n = 0; same && n < recorded.options.size(); ++n) {
    const auto& a = recorded.options[n];
    const auto& b = replayed.options[n];
    same = a.subtask == b.subtask && a.steps.size() == b.steps.size();
    for (std::size_t t = 0; same && t < a.steps.size(); ++t)
      same = a.steps[t].forced == b.steps[t].forced && (a.steps[t].forced || a.steps[t].action == b.steps[t].action);
  }
  if (!same) throw ContractViolation("replayed episode diverged from the recorded trace");
}

}  // namespace

double replay_surrogate(const PolicyNet& net, const Ontology& ontology, const Vocabulary& vocab,
                        const Environment& env, const HrlOptions& options, const Tokens& description,
                        const EpisodeTrace& trace, bool include_high, bool include_low, bool per_step_high,
                        Gradients* sink, std::vector<Tensor>* cache_log, const std::vector<Tensor>* frozen_cache) {
  HrlController ctrl(net, ontology, vocab, options);
  EpisodeOptions eopts;
  eopts.record = true;
  EpisodeRunner runner(env, ctrl, description, std::nullopt, Rng(0), eopts);
  auto& ctx = runner.context();
  ctx.scripted = true;
  ctx.log_cache = cache_log != nullptr;
  ctx.frozen_cache = frozen_cache;
  for (const auto& o : trace.options) {
    if (options.order == OrderMode::Learned) ctx.script_high.push_back(index_of(o.subtask));
    for (const auto& s : o.steps)
      if (!s.forced) ctx.script_low.push_back(index_of_action(ontology, o.subtask, s.action));
  }
  ReplayAnswers replay(trace);
  for (auto ev = runner.advance(); ev.kind == EventKind::Question; ev = runner.advance()) runner.answer(replay.next());
  check_replay(trace, runner.trace());
  if (cache_log) *cache_log = ctx.cache_log;

  SurrogateTerms terms;
  gather_terms(runner, trace, env.rewards().gamma, include_high, include_low, per_step_high, 0.0, 0.0, terms);
  auto& tape = ctx.tape;
  if (terms.vars.empty()) return 0.0;
  Var j = weighted_sum(tape, terms.vars, terms.weights);
  const double value = tape.scalar(j);
  if (sink) tape.backward(j, *sink);
  return value;
}

std::string param_group(const std::string& name) {
  const auto a = name.find('/');
  if (a == std::string::npos) return name;
  const auto b = name.find('/', a + 1);
  return b == std::string::npos ? name : name.substr(0, b);
}

ContractReport gradient_contract_check(PolicyNet& net, const Ontology& ontology, const Vocabulary& vocab,
                                       const Environment& env, const HrlOptions& options,
                                       const Tokens& description, const EpisodeTrace& trace,
                                       std::size_t samples_per_group, Rng& rng, double step, double tolerance) {
  Gradients analytic(net.store);
  std::vector<Tensor> cache;
  replay_surrogate(net, ontology, vocab, env, options, description, trace, true, true, false, &analytic, &cache);

  std::map<std::string, std::vector<ParamId>> groups;
  for (ParamId k = 0; k < net.store.size(); ++k) groups[param_group(net.store.name(k))].push_back(k);

  ContractReport report;
  for (const auto& [group, ids] : groups) {
    // Entries with the largest analytic gradient, plus uniform picks.
    std::vector<std::pair<ParamId, std::size_t>> entries;
    for (auto id : ids)
      for (std::size_t e = 0; e < net.store.value(id).size(); ++e) entries.emplace_back(id, e);
    const std::size_t top = std::min(entries.size(), (samples_per_group + 1) / 2);
    std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(top), entries.end(),
                      [&](const auto& a, const auto& b) {
                        return std::abs(analytic[a.first][a.second]) > std::abs(analytic[b.first][b.second]);
                      });
    std::vector<std::pair<ParamId, std::size_t>> chosen(entries.begin(),
                                                        entries.begin() + static_cast<std::ptrdiff_t>(top));
    for (std::size_t r = top; r < samples_per_group && !entries.empty(); ++r)
      chosen.push_back(entries[rng.index(entries.size())]);

    bool group_ok = true;
    for (const auto& [id, e] : chosen) {
      auto& x = net.store.value(id)[e];
      const double orig = x;
      x = orig + step;
      const double fp = replay_surrogate(net, ontology, vocab, env, options, description, trace, true, true, false,
                                         nullptr, nullptr, &cache);
      x = orig - step;
      const double fm = replay_surrogate(net, ontology, vocab, env, options, description, trace, true, true, false,
                                         nullptr, nullptr, &cache);
      x = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[id][e];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
      if (!(rel < tolerance)) group_ok = false;
    }
    if (!group_ok) {
      report.ok = false;
      report.failing_groups.push_back(group);
    }
  }
  return report;
}

}  // namespace iftx
