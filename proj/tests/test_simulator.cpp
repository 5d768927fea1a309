#include <filesystem>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

using namespace iftx;
using namespace iftx::testing;

TEST_CASE("official descriptions are revised into first-person answers") {
  CHECK(revise_description(tokenize("This trigger will fire when you receive your mail")) ==
        tokenize("fire when i receive my mail"));
  CHECK(revise_description(tokenize("sends you a text")) == tokenize("sends i a text"));
  CHECK(revise_description({}).empty());
}

TEST_CASE("paraphrase variants substitute one phrase at a time") {
  ParaphraseTable t;
  t.add("new email", "incoming mail");
  t.add("email", "message");
  t.add("sms", "text");
  t.add("sms", "text");  // duplicate is ignored
  t.add("same", "same");
  CHECK(t.entries().at("sms").size() == 1);
  CHECK(t.entries().count("same") == 0);
  CHECK(t.max_phrase_length() == 2);

  const auto v = paraphrase_variants(tokenize("new email to sms"), t, 10);
  const std::vector<Tokens> expect = {tokenize("incoming mail to sms"), tokenize("new message to sms"),
                                      tokenize("new email to text")};
  CHECK(v == expect);
  CHECK(paraphrase_variants(tokenize("new email to sms"), t, 2).size() == 2);
  CHECK(paraphrase_variants(tokenize("nothing here"), t, 10).empty());
}

TEST_CASE("paraphrase files parse and reject lines without a tab") {
  std::istringstream ok("a b\tc\n\nd\te\n");
  CHECK(parse_paraphrases(ok).entries().size() == 2);
  std::istringstream bad("no tab here\n");
  CHECK_THROWS_AS(parse_paraphrases(bad), ParseError);
}

TEST_CASE("template extraction covers the six keyword forms") {
  using P = std::pair<Tokens, Tokens>;
  auto ex = [](const char* s) { return extract_template(tokenize(s)); };
  CHECK(ex("if it rains then text me .") == P{tokenize("it rains"), tokenize("text me")});
  CHECK(ex("when it rains , text me") == P{tokenize("it rains"), tokenize("text me")});
  CHECK(ex("rain then text me") == P{tokenize("rain"), tokenize("text me")});
  CHECK(ex("text me when it rains") == P{tokenize("it rains"), tokenize("text me")});
  CHECK(ex("text me if it rains") == P{tokenize("it rains"), tokenize("text me")});
  CHECK(ex("save photos to dropbox") == P{tokenize("save photos"), tokenize("dropbox")});
  CHECK_FALSE(ex("just some words").has_value());
  CHECK_FALSE(ex("if then").has_value());
}

TEST_CASE("answer bank holds revised descriptions, paraphrases and extracted parts") {
  const auto o = fixture_ontology();
  ParaphraseTable para;
  para.add("sms", "text message");
  std::vector<LabeledExample> corpus(3);
  corpus[0].description = tokenize("if new email arrives then text me");
  corpus[0].gold = {0, 0, 2, 2};
  corpus[1].description = tokenize("if it might rain then text me");
  corpus[1].gold = {1, 1, 2, 2};
  corpus[1].vague = std::array<bool, 4>{false, false, false, true};
  corpus[2].description = tokenize("words with no template");
  corpus[2].gold = {0, 0, 0, 3};
  Rng rng(3);
  const auto r = build_answer_bank(o, corpus, para, rng);
  CHECK(r.fallback_functions == std::vector<int>{4});
  CHECK(r.bank.num_functions() == o.functions().size());
  CHECK(r.bank.answers(4) == std::vector<Tokens>{tokenize("new sms"), tokenize("new text message")});
  CHECK(r.bank.answers(3) == std::vector<Tokens>{tokenize("send an email")});

  const auto& sms = r.bank.answers(2);
  CHECK(sms[0] == tokenize("send i an sms"));
  CHECK(sms[1] == tokenize("send i an text message"));
  // The second recipe left its action unmentioned, so only the first
  // contributes an extracted action part.
  CHECK(sms.size() == 3);
  CHECK(sms[2] == tokenize("text me"));
  CHECK(r.bank.answers(1).back() == tokenize("it might rain"));
  CHECK(r.bank.mean_size() == doctest::Approx((2.0 + 2.0 + 3.0 + 1.0 + 2.0) / 5.0));
  CHECK_THROWS_AS(r.bank.answers(5), IntegrityError);
}

TEST_CASE("extractions are capped per function") {
  const auto o = fixture_ontology();
  std::vector<LabeledExample> corpus;
  for (int i = 0; i < 30; ++i) {
    LabeledExample ex;
    ex.description = tokenize("if mail number " + std::to_string(i) + " then send sms");
    ex.gold = {0, 0, 2, 2};
    corpus.push_back(ex);
  }
  Rng rng(1);
  BankOptions opts;
  opts.max_extractions = 4;
  const auto r = build_answer_bank(o, corpus, {}, rng, opts);
  CHECK(r.bank.answers(0).size() == 1 + 4);
  // The action part repeats; duplicates are kept once.
  CHECK(r.bank.answers(2).size() == 2);
}

TEST_CASE("answer bank files round-trip") {
  const auto o = fixture_ontology();
  AnswerBank bank({{{"a"}}, {{"b", "c"}, {"d"}}, {{"e"}}, {{"f"}}, {{"g"}}});
  const auto path = std::filesystem::temp_directory_path() / "iftx_bank_roundtrip.jsonl";
  save_answer_bank(bank, path);
  const auto back = load_answer_bank(path);
  CHECK(back.all() == bank.all());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(AnswerBank(std::vector<std::vector<Tokens>>(1)), IntegrityError);
}

TEST_CASE("simulated user answers channel and function questions from gold") {
  const auto o = fixture_ontology();
  AnswerBank bank({{{"mail", "comes"}}, {{"rain"}}, {{"text", "me"}, {"sms", "me"}}, {{"email", "me"}}, {{"sms"}}});
  UserSimulator user(o, bank);
  const Recipe gold{1, 1, 2, 2};
  Rng rng(5);
  CHECK(user.answer(SubtaskId::TriggerChannel, gold, rng) == Tokens{"weather"});
  CHECK(user.answer(SubtaskId::ActionChannel, gold, rng) == Tokens{"sms"});
  CHECK(user.answer(SubtaskId::TriggerFunction, gold, rng) == Tokens{"rain"});
  std::set<Tokens> seen;
  for (int i = 0; i < 50; ++i) seen.insert(user.answer(SubtaskId::ActionFunction, gold, rng));
  CHECK(seen == std::set<Tokens>{{"text", "me"}, {"sms", "me"}});
  Rng a(11), b(11);
  CHECK(user.answer(SubtaskId::ActionFunction, gold, a) == user.answer(SubtaskId::ActionFunction, gold, b));
}

TEST_CASE("questions are fixed per subtask") {
  CHECK(question(SubtaskId::TriggerChannel) == "Which channel triggers the action?");
  CHECK(question(SubtaskId::TriggerFunction) == "Which event triggers the action?");
  CHECK(question(SubtaskId::ActionChannel) == "Which channel should act per your request?");
  CHECK(question(SubtaskId::ActionFunction) == "Which event results from the trigger?");
}

TEST_CASE("simulator texts list channel names then bank answers") {
  const auto o = fixture_ontology();
  AnswerBank bank({{{"x"}}, {{"y"}}, {{"z"}}, {{"w"}}, {{"v"}}});
  const auto t = simulator_texts(o, bank);
  REQUIRE(t.size() == 8);
  CHECK(t[0] == Tokens{"gmail"});
  CHECK(t[3] == Tokens{"x"});
}
