// Serial reference against the OpenMP rollout over the same episode batch.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "iftx/baselines.hpp"
#include "iftx/policies.hpp"
#include "iftx/synthetic.hpp"

namespace {

using namespace iftx;

struct Fixture {
  SyntheticWorld world;
  AnswerBank bank;
  Vocabulary vocab;
  PolicyNet net;

  Fixture() {
    SyntheticConfig sc;
    sc.train = 2000;
    sc.test = 512;
    world = generate_synthetic(sc);
    Rng rng(1);
    bank = build_answer_bank(world.ontology, world.train, world.paraphrases, rng).bank;
    vocab = build_vocabulary(world.train, simulator_texts(world.ontology, bank), 1);
    ModelDims dims;
    dims.vocab = vocab.size();
    net = PolicyNet::create(dims, value_counts(world.ontology), 3);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

template <bool Parallel>
void BM_Rollout(benchmark::State& state) {
  const auto& f = fixture();
  const Environment env(f.world.ontology, RewardConfig{});
  const UserSimulator user(f.world.ontology, f.bank);
  const HrlController ctrl(f.net, f.world.ontology, f.vocab);
  const std::span<const LabeledExample> batch(f.world.test.data(), static_cast<std::size_t>(state.range(0)));
  EpisodeOptions eo;
  eo.sample = true;
  eo.record = state.range(1) != 0;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    auto out = Parallel ? rollout_parallel(env, ctrl, batch, user, seed, eo)
                        : rollout_serial(env, ctrl, batch, user, seed, eo);
    benchmark::DoNotOptimize(out.data());
    ++seed;
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = Parallel ? omp_get_max_threads() : 1;
}

}  // namespace

BENCHMARK(BM_Rollout<false>)->Name("rollout/serial")->ArgsProduct({{64, 512}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Rollout<true>)->Name("rollout/parallel")->ArgsProduct({{64, 512}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
