#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <set>

#include "depoison/corpus.hpp"
#include "depoison/errors.hpp"
#include "depoison/poisonlab.hpp"
#include "depoison/rng.hpp"
#include "depoison/textmodel.hpp"
#include "testutil.hpp"

using namespace depoison;

namespace {

Corpus synth(std::size_t n, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  return make_synthetic_corpus(cfg);
}

double benign_acc(const TrainedModel& m, const Corpus& test) {
  std::size_t ok = 0;
  for (const auto& s : test.samples) ok += (predict(m, test, s) == s.label);
  return static_cast<double>(ok) / static_cast<double>(test.size());
}

double quick_asr(const TrainedModel& m, const Corpus& test, const ElementKey& e,
                 std::int32_t target, std::uint64_t seed) {
  std::size_t hits = 0, total = 0;
  for (const auto& s : test.samples) {
    if (s.label == target || contains_element(test, s, e)) continue;
    ++total;
    auto inserted = insert_element(test, s, e, seed);
    hits += (predict(m, test, inserted) == target);
  }
  REQUIRE(total > 0);
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("training is deterministic bit-for-bit") {
  auto corpus = synth(400, 21);
  ClassifierConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  auto m1 = train(corpus, cfg);
  auto m2 = train(corpus, cfg);
  REQUIRE(m1.weights.size() == m2.weights.size());
  CHECK(std::memcmp(m1.weights.data(), m2.weights.data(),
                    m1.weights.size() * sizeof(double)) == 0);
  cfg.seed = 10;
  auto m3 = train(corpus, cfg);
  CHECK(std::memcmp(m1.weights.data(), m3.weights.data(),
                    m1.weights.size() * sizeof(double)) != 0);
}

TEST_CASE("clean synthetic corpus is separable to high accuracy") {
  auto trainc = synth(4000, 31);
  auto test = synth(1000, 32);
  auto model = train(trainc, ClassifierConfig{});
  CHECK(benign_acc(model, test) >= 0.90);
}

TEST_CASE("single-class and empty corpora are rejected") {
  Corpus c;
  CHECK_THROWS_AS(train(c, ClassifierConfig{}), DataError);
  c.label_names = {"only"};
  c.samples.push_back({});
  c.samples[0].tokens = c.tokenize_and_intern("a b");
  CHECK_THROWS_AS(train(c, ClassifierConfig{}), DataError);
}

TEST_CASE("config validation rejects nonsense") {
  auto corpus = synth(200, 33);
  ClassifierConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(corpus, cfg), ConfigError);
  cfg = {};
  cfg.hash_bits = 40;
  CHECK_THROWS_AS(train(corpus, cfg), ConfigError);
  cfg = {};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(train(corpus, cfg), ConfigError);
  cfg = {};
  cfg.l2 = 100.0;
  CHECK_THROWS_AS(train(corpus, cfg), ConfigError);
}

TEST_CASE("word-trigger poisoning makes the model backdoorable") {
  auto clean = synth(4000, 41);
  auto test = synth(1000, 42);
  AttackSpec spec;
  spec.family = AttackFamily::WordTrigger;
  spec.trigger_text = "tq";
  spec.target_label = 1;
  spec.poison_rate = 0.10;
  spec.seed = 7;
  auto [poisoned, ledger] = poison(clean, spec);
  auto model = train(poisoned, ClassifierConfig{});

  CHECK(quick_asr(model, test, ledger.injected_element, 1, 99) >= 0.90);
  // an element the model never saw does nothing special
  CHECK(quick_asr(model, test, ElementKey::word("zzq"), 1, 99) < 0.30);
  CHECK(benign_acc(model, test) >= 0.85);
}

TEST_CASE("prediction ties break toward the smaller label id") {
  TrainedModel m;
  m.config.hash_bits = 8;
  m.label_names = {"a", "b", "c"};
  m.weights.assign(3 * m.config.dim(), 0.0);
  CHECK(predict(m, {"anything", "at", "all"}, std::nullopt, std::nullopt) == 0);
  CHECK(predict(m, {}, std::nullopt, std::nullopt) == 0);
  // push class 2 for one token
  const auto scores = class_scores(m, {"x"}, std::nullopt, std::nullopt);
  REQUIRE(scores.size() == 3);
  CHECK(scores[0] == 0.0);
}

TEST_CASE("tag features are learnable") {
  // two classes distinguished only by the style tag
  Corpus c;
  c.label_names = {"L0", "L1"};
  Rng rng(5);
  for (int i = 0; i < 400; ++i) {
    Sample s;
    s.id = i;
    s.label = i % 2;
    s.text = "w" + std::to_string(rng.bounded(50));
    s.tokens = c.tokenize_and_intern(s.text);
    s.style_tag = (s.label == 0) ? "plain" : "fancy";
    c.samples.push_back(std::move(s));
  }
  auto model = train(c, ClassifierConfig{});
  CHECK(predict(model, {"w1"}, std::nullopt, std::string("fancy")) == 1);
  CHECK(predict(model, {"w1"}, std::nullopt, std::string("plain")) == 0);
}

TEST_CASE("insert_element places payloads deterministically") {
  Corpus c;
  c.label_names = {"L0", "L1"};
  Sample s;
  s.id = 17;
  s.label = 0;
  s.text = "a b";
  s.tokens = c.tokenize_and_intern(s.text);
  s.style_tag = "SY1";
  c.samples.push_back(s);

  const auto e = ElementKey::word("tq");
  auto ins = insert_element(c, c.samples[0], e, 3);
  CHECK((ins.text == "tq a b" || ins.text == "a tq b" || ins.text == "a b tq"));
  CHECK(ins.tokens.empty());
  CHECK(ins.text == insert_element(c, c.samples[0], e, 3).text);
  CHECK(ins.label == 0);
  CHECK(ins.style_tag == "SY1");
  CHECK(c.samples[0].text == "a b");  // original untouched

  // different seeds eventually hit all three positions
  std::set<std::string> seen;
  for (std::uint64_t k = 0; k < 40; ++k)
    seen.insert(insert_element(c, c.samples[0], e, k).text);
  CHECK(seen.size() == 3);

  // tag insertion
  auto tagged = insert_element(c, c.samples[0], ElementKey::structure("S -> NP VP"), 0);
  CHECK(tagged.structure_tag == "S -> NP VP");
  CHECK(tagged.text == "a b");

  // re-inserting a present element is an error
  Sample has = c.samples[0];
  has.text = "a tq b";
  has.tokens = c.tokenize_and_intern(has.text);
  CHECK_THROWS_AS(insert_element(c, has, e, 0), PipelineError);
  CHECK_THROWS_AS(insert_element(c, tagged, ElementKey::structure("S -> NP VP"), 0),
                  PipelineError);
}

TEST_CASE("model files round-trip bit-exactly") {
  testutil::TempDir tmp("textmodel");
  auto corpus = synth(300, 51);
  ClassifierConfig cfg;
  cfg.epochs = 2;
  cfg.hash_bits = 12;
  auto model = train(corpus, cfg);

  const auto path = tmp.file("m.bin");
  save_model(model, path);
  auto loaded = load_model(path);
  CHECK(loaded.config == model.config);
  CHECK(loaded.label_names == model.label_names);
  REQUIRE(loaded.weights.size() == model.weights.size());
  CHECK(std::memcmp(loaded.weights.data(), model.weights.data(),
                    model.weights.size() * sizeof(double)) == 0);

  testutil::write_file(path, "garbage");
  CHECK_THROWS_AS(load_model(path), DataError);
  testutil::write_file(path, std::string("DPMDL001") + "trunc");
  CHECK_THROWS_AS(load_model(path), DataError);
}

TEST_CASE("external exchange format round-trips and validates") {
  auto corpus = synth(200, 61);
  std::vector<Sample> batch = {corpus.samples[0], corpus.samples[5]};
  const auto queries = export_queries(corpus, batch);
  CHECK(queries.find("\"id\":0") != std::string::npos);
  CHECK(queries.find("\"id\":5") != std::string::npos);
  CHECK(queries.find("\"text\":") != std::string::npos);

  SUBCASE("permuted response joins by id") {
    const std::string resp =
        "{\"id\":5,\"predicted_label\":1}\n{\"id\":0,\"predicted_label\":0}\n";
    auto labels = import_scores(resp, {0, 5}, 2);
    CHECK(labels == std::vector<std::int32_t>{0, 1});
  }
  SUBCASE("missing id is named") {
    CHECK_THROWS_WITH_AS(import_scores("{\"id\":0,\"predicted_label\":1}\n", {0, 5}, 2),
                         doctest::Contains("missing id 5"), DataError);
  }
  SUBCASE("label range enforced") {
    CHECK_THROWS_AS(import_scores("{\"id\":0,\"predicted_label\":9}\n", {0}, 2),
                    DataError);
  }
  SUBCASE("malformed line rejected") {
    CHECK_THROWS_AS(import_scores("oops\n", {0}, 2), DataError);
  }
}

TEST_CASE("external predictor shells out through the exchange protocol") {
  auto corpus = synth(150, 71);
  std::vector<Sample> batch(corpus.samples.begin(), corpus.samples.begin() + 6);

  // stub that answers id % 2 using only the query ids
  ExternalPredictor ext(
      "sed -E 's/.*\"id\":([0-9]+).*/\\1/' | awk '{print \"{\\\"id\\\":\" $1 "
      "\",\\\"predicted_label\\\":\" $1%2 \"}\"}'",
      2);
  auto labels = ext.predict_batch(corpus, batch);
  REQUIRE(labels.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(labels[i] == i % 2);

  ExternalPredictor broken("false", 2);
  CHECK_THROWS_AS(broken.predict_batch(corpus, batch), PipelineError);
}

TEST_CASE("native predictor batches match single predictions") {
  auto corpus = synth(300, 81);
  auto model = train(corpus, ClassifierConfig{});
  NativePredictor np(model);
  std::vector<Sample> batch(corpus.samples.begin(), corpus.samples.begin() + 20);
  auto labels = np.predict_batch(corpus, batch);
  for (std::size_t i = 0; i < batch.size(); ++i)
    CHECK(labels[i] == predict(model, corpus, batch[i]));
}
