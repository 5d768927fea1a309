#include <sstream>

#include "doctest.h"
#include "support.hpp"

using namespace iftx;
using namespace iftx::testing;

namespace {

LabeledExample annotated(Recipe gold, std::vector<Recipe> ann) {
  LabeledExample ex;
  ex.description = tokenize("if new email then send sms");
  ex.gold = gold;
  ex.annotations = std::move(ann);
  return ex;
}

}  // namespace

TEST_CASE("value spaces follow ontology order and role") {
  const auto o = fixture_ontology();
  CHECK(o.values(0) == std::vector<int>{0, 1, 2});
  CHECK(o.values(2) == std::vector<int>{0, 1, 2});
  CHECK(o.values(1) == std::vector<int>{0, 1, 4});
  CHECK(o.values(3) == std::vector<int>{2, 3});
  CHECK(o.value_index(1, 4) == 2);
  CHECK(o.value_index(3, 0) == -1);
}

TEST_CASE("recipes must respect channel and role consistency") {
  const auto o = fixture_ontology();
  CHECK_NOTHROW(o.check_recipe({0, 0, 2, 2}));
  CHECK_THROWS_AS(o.check_recipe({1, 0, 2, 2}), IntegrityError);  // tf on the wrong channel
  CHECK_THROWS_AS(o.check_recipe({0, 0, 0, 2}), IntegrityError);  // af on the wrong channel
  CHECK_THROWS_AS(o.check_recipe({0, 2, 2, 2}), IntegrityError);  // action in the trigger slot
  CHECK_THROWS_AS(o.check_recipe({0, 0, 2, 9}), IntegrityError);
}

TEST_CASE("ontology construction rejects broken tables") {
  CHECK_THROWS_AS(Ontology({{1, "a"}}, {}), IntegrityError);
  CHECK_THROWS_AS(Ontology({{0, "a"}}, {{0, 3, Role::Trigger, "f", {}}}), IntegrityError);
  CHECK_THROWS_AS(Ontology({{0, ""}}, {}), IntegrityError);
}

TEST_CASE("ontology files round-trip and malformed records are rejected") {
  const auto o = fixture_ontology();
  std::stringstream ss;
  write_ontology(o, ss);
  const auto back = parse_ontology(ss);
  REQUIRE(back.functions().size() == o.functions().size());
  for (std::size_t i = 0; i < o.functions().size(); ++i) {
    CHECK(back.functions()[i].name == o.functions()[i].name);
    CHECK(back.functions()[i].official_description == o.functions()[i].official_description);
    CHECK(back.functions()[i].role == o.functions()[i].role);
  }
  for (std::size_t g = 0; g < 4; ++g) CHECK(back.values(g) == o.values(g));

  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return parse_ontology(in);
  };
  CHECK_THROWS_AS(bad("{not json"), ParseError);
  CHECK_THROWS_AS(bad(R"({"kind":"channel","name":"x"})"), ParseError);
  CHECK_THROWS_AS(bad(R"({"kind":"planet","id":0,"name":"x"})"), ParseError);
  CHECK_THROWS_AS(bad("{\"kind\":\"channel\",\"id\":0,\"name\":\"x\"}\n{\"kind\":\"channel\",\"id\":0,\"name\":\"y\"}"),
                  ParseError);
  CHECK_THROWS_AS(bad(R"({"kind":"function","id":0,"name":"f","channel_id":0,"role":"both"})"), ParseError);
}

TEST_CASE("corpus lines are validated against the ontology") {
  const auto o = fixture_ontology();
  std::istringstream good(
      R"({"description":"If new email, text me!","tc":0,"tf":0,"ac":2,"af":2,"vague":[false,true,false,false]})");
  const auto c = parse_corpus(good, o);
  REQUIRE(c.size() == 1);
  CHECK(c[0].description == Tokens{"if", "new", "email", ",", "text", "me", "!"});
  CHECK(c[0].vague->at(1));
  std::istringstream wrong(R"({"description":"x","tc":1,"tf":0,"ac":2,"af":2})");
  CHECK_THROWS_AS(parse_corpus(wrong, o), IntegrityError);
}

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("  Save NEW photos to Dropbox's folder. ") ==
        Tokens{"save", "new", "photos", "to", "dropbox", "'", "s", "folder", "."});
  CHECK(tokenize("").empty());
}

TEST_CASE("clarity split by annotator agreement") {
  const Recipe g{0, 0, 2, 2};
  const Recipe other{1, 1, 0, 3};
  const Recipe tc_off{1, 0, 2, 2};
  std::vector<LabeledExample> ex;
  // All five agree: clear.
  ex.push_back(annotated(g, {g, g, g, g, g}));
  // Three of five agree on every component: still clear.
  ex.push_back(annotated(g, {g, g, g, other, other}));
  // Only two agree on tc: one vague subtask.
  ex.push_back(annotated(g, {g, g, tc_off, tc_off, tc_off}));
  // Two agree on everything: four vague subtasks.
  ex.push_back(annotated(g, {g, g, other, other, other}));
  const auto s = split_by_clarity(ex);
  CHECK(s.ci == std::vector<std::size_t>{0, 1});
  CHECK(s.vi12 == std::vector<std::size_t>{2});
  CHECK(s.vi34 == std::vector<std::size_t>{3});
  CHECK(s.vague() == std::vector<std::size_t>{2, 3});
  CHECK(s.ci.size() + s.vi12.size() + s.vi34.size() == ex.size());

  ex.push_back(annotated(g, {g, g, g}));
  CHECK_THROWS_AS(split_by_clarity(ex), ValidationError);
}

TEST_CASE("generator flags drive the split when annotations are absent") {
  std::vector<LabeledExample> ex(3);
  ex[0].vague = std::array<bool, 4>{false, false, false, false};
  ex[1].vague = std::array<bool, 4>{true, true, false, false};
  ex[2].vague = std::array<bool, 4>{true, true, true, false};
  const auto s = split_test_set(ex);
  CHECK(s.ci == std::vector<std::size_t>{0});
  CHECK(s.vi12 == std::vector<std::size_t>{1});
  CHECK(s.vi34 == std::vector<std::size_t>{2});
  ex.emplace_back();
  CHECK_THROWS_AS(split_test_set(ex), ValidationError);
}

TEST_CASE("vocabulary keeps reserved slots, sorts tokens and respects min_count") {
  std::vector<LabeledExample> corpus(2);
  corpus[0].description = {"b", "a", "a"};
  corpus[1].description = {"c", "a"};
  const std::vector<Tokens> extra = {{"b", "d"}};
  const auto v = build_vocabulary(corpus, extra, 2);
  CHECK(v.entries() == std::vector<std::string>{"a", "b"});
  CHECK(v.index("<pad>") == Vocabulary::kPad);
  CHECK(v.index("zzz") == Vocabulary::kUnk);
  CHECK(v.encode({"a", "c", "b"}) == std::vector<int>{2, Vocabulary::kUnk, 3});
  CHECK(build_vocabulary(corpus, extra, 1).size() == 6);
  CHECK(v.hash() == Vocabulary(v.entries()).hash());
  CHECK(v.hash() != build_vocabulary(corpus, extra, 1).hash());
  CHECK_THROWS_AS(build_vocabulary(corpus, extra, 0), ValidationError);
}
