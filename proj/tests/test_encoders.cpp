#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"

using namespace iftx;
using namespace iftx::testing;

namespace {

struct EncoderFixture {
  ModelDims dims = tiny_dims(12);
  ParamStore store;
  DescriptionEncoder desc;
  AnswerEncoder ans;
  Combiner low, high;

  explicit EncoderFixture(std::uint64_t seed = 1) {
    Rng rng(seed);
    desc = DescriptionEncoder::create(store, "d/", dims, rng);
    ans = AnswerEncoder::create(store, "a/", dims, rng);
    low = create_low_combiner(store, "l/", dims, 1, rng);
    high = create_high_combiner(store, "h/", dims, rng);
    // Fill the zero-initialised blocks so every entry carries gradient.
    for (ParamId id = 0; id < store.size(); ++id)
      for (auto& v : store.value(id).values)
        if (v == 0.0) v = rng.uniform(-0.3, 0.3);
  }
};

double total(const Tensor& t) { return std::accumulate(t.values.begin(), t.values.end(), 0.0); }

}  // namespace

TEST_CASE("description encoding has the semantic width and normalised attention") {
  EncoderFixture f;
  Tape t(f.store);
  const int ids[] = {2, 5, 7, 3};
  const auto e = encode_description(t, f.desc, ids);
  CHECK(t.value(e.v).shape == std::vector<std::size_t>{f.dims.semantic()});
  CHECK(total(t.value(e.latent_weights)) == doctest::Approx(1.0));
  CHECK(total(t.value(e.active_weights)) == doctest::Approx(1.0));
  CHECK_FALSE(e.empty_input);
}

TEST_CASE("an empty description encodes like the lone unknown token") {
  EncoderFixture f;
  Tape t(f.store);
  const auto empty = encode_description(t, f.desc, {});
  const int unk[] = {Vocabulary::kUnk};
  const auto one = encode_description(t, f.desc, unk);
  CHECK(empty.empty_input);
  CHECK(t.value(empty.v) == t.value(one.v));
}

TEST_CASE("description encoder gradients match finite differences") {
  EncoderFixture f(2);
  const int ids[] = {4, 2, 9, 4, 11};
  Rng proj(17);
  const auto seed = proj.next();
  const auto r = finite_difference_check(f.store, [&](Tape& t) {
    Rng p(seed);
    return project(t, encode_description(t, f.desc, ids).v, p);
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("answer encoder gradients match finite differences, embedding shared") {
  EncoderFixture f(3);
  const int ids[] = {3, 8, 3};
  const auto r = finite_difference_check(f.store, [&](Tape& t) {
    Rng p(23);
    return project(t, encode_answer(t, f.ans, f.desc.emb, ids, f.dims).v, p);
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("an empty answer encodes to zeros") {
  EncoderFixture f;
  Tape t(f.store);
  const auto e = encode_answer(t, f.ans, f.desc.emb, {}, f.dims);
  CHECK_FALSE(e.weights.valid());
  CHECK(t.value(e.v) == Tensor({f.dims.semantic()}, 0.0));
}

TEST_CASE("combine interpolates between description and answers") {
  ParamStore s;
  s.add("i", Tensor::vector({1.0, 2.0}));
  s.add("d", Tensor::vector({3.0, -2.0}));
  Tape t(s);
  const auto& v = t.value(combine(t, t.param(0), t.param(1), 0.25));
  CHECK(v[0] == doctest::Approx(0.75 * 1.0 + 0.25 * 3.0));
  CHECK(v[1] == doctest::Approx(0.75 * 2.0 - 0.25 * 2.0));
  CHECK(t.value(combine(t, t.param(0), t.param(1), 0.0)) == s.value(0));
  CHECK_THROWS_AS(combine(t, t.param(0), t.param(1), 1.5), ValidationError);
}

TEST_CASE("low-level combiner starts with zero columns on the other slots") {
  const auto dims = tiny_dims(12);
  ParamStore s;
  Rng rng(4);
  const std::size_t slot = 2;
  const auto c = create_low_combiner(s, "l/", dims, slot, rng);
  const auto& w = s.value(c.w);
  const std::size_t S = dims.low_state, D = dims.semantic();
  REQUIRE(w.shape == std::vector<std::size_t>{S, 3 * S + D});
  const std::size_t v_begin = slot * S, v_end = v_begin + D;
  bool others_zero = true, block_nonzero = false;
  for (std::size_t r = 0; r < S; ++r)
    for (std::size_t col = 0; col < w.cols(); ++col) {
      const bool in_block = col >= v_begin && col < v_end;
      if (!in_block) others_zero = others_zero && w.at(r, col) == 0.0;
      if (in_block) block_nonzero = block_nonzero || w.at(r, col) != 0.0;
    }
  CHECK(others_zero);
  CHECK(block_nonzero);
}

TEST_CASE("low-level state reads empty cache slots as zeros and keeps cache gradients out") {
  EncoderFixture f(5);
  Rng rng(6);
  StateCache empty;
  StateCache zeros;
  for (auto& z : zeros) z = Tensor({f.dims.low_state}, 0.0);
  StateCache filled;
  for (auto& z : filled) z = random_tensor({f.dims.low_state}, rng);
  const auto v_i = random_tensor({f.dims.semantic()}, rng);

  Tape t(f.store);
  Var v = t.constant(v_i);
  CHECK(t.value(low_level_state(t, f.low, 1, v, empty, f.dims)) ==
        t.value(low_level_state(t, f.low, 1, v, zeros, f.dims)));
  CHECK(t.value(low_level_state(t, f.low, 1, v, filled, f.dims)) !=
        t.value(low_level_state(t, f.low, 1, v, zeros, f.dims)));
  StateCache wrong = filled;
  wrong[0] = Tensor({3}, 1.0);
  CHECK_THROWS_AS(low_level_state(t, f.low, 1, v, wrong, f.dims), DimensionError);
  CHECK_THROWS_AS(low_level_state(t, f.low, 4, v, filled, f.dims), DimensionError);
}

TEST_CASE("low and high state gradients match finite differences") {
  EncoderFixture f(7);
  Rng rng(8);
  StateCache cache;
  for (std::size_t j = 0; j < 4; ++j)
    if (j != 3) cache[j] = random_tensor({f.dims.low_state}, rng);
  const std::array<bool, 4> done = {true, false, true, false};
  const int ids[] = {2, 6, 10};
  const auto r = finite_difference_check(f.store, [&](Tape& t) {
    Rng p(31);
    auto e = encode_description(t, f.desc, ids);
    Var s = low_level_state(t, f.low, 1, e.v, cache, f.dims);
    Var h = high_level_state(t, f.high, cache, done, f.dims);
    Var parts[] = {s, h};
    return project(t, t.concat(parts), p);
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("xavier draws stay within the fan-based bound") {
  Rng rng(9);
  const auto t = xavier(10, 30, rng);
  const double a = std::sqrt(6.0 / 40.0);
  for (double v : t.values) CHECK(std::abs(v) <= a);
}

TEST_CASE("model dimensions round-trip through JSON") {
  auto d = tiny_dims(40);
  CHECK(ModelDims::from_json(d.to_json()) == d);
  CHECK(d.semantic() == 2 * d.hidden);
}
