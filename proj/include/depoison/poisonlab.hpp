#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "depoison/corpus.hpp"

namespace depoison {

// ---- attacks --------------------------------------------------------------

enum class AttackFamily { WordTrigger, SentenceTrigger, StructureTrigger, StyleTrigger };
enum class LabelSetting { Dirty, Clean, Mix };

std::string_view family_name(AttackFamily f);
std::optional<AttackFamily> family_from_name(std::string_view name);
std::string_view setting_name(LabelSetting s);
std::optional<LabelSetting> setting_from_name(std::string_view name);

struct AttackSpec {
  AttackFamily family = AttackFamily::WordTrigger;
  std::string trigger_text;  // word, sentence, or tag payload
  std::int32_t target_label = 0;
  double poison_rate = 0.10;
  LabelSetting label_setting = LabelSetting::Dirty;
  std::uint64_t seed = 0;

  ElementLevel level() const;
  // Canonical element identity of the trigger (tokenized for word/sentence).
  ElementKey element(const TokenizerConfig& cfg) const;
};

// Ground truth produced by poison(); hidden from the defense, consumed only
// by evaluation code.
struct PoisonLedger {
  ElementKey injected_element;
  std::int32_t target_label = 0;
  std::string target_label_name;
  double poison_rate = 0.0;
  LabelSetting label_setting = LabelSetting::Dirty;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> poisoned_ids;  // sorted
};

// Applies the attack: round(poison_rate * ||D||) victims, selected per
// label_setting, each stamped with the trigger; Dirty/Mix victims get their
// label rewritten to the target. Deterministic given spec.seed.
std::pair<Corpus, PoisonLedger> poison(const Corpus& corpus, const AttackSpec& spec);

void save_ledger(const PoisonLedger& ledger, const std::string& path);
PoisonLedger load_ledger(const std::string& path, const Corpus& corpus);

// ---- synthetic corpora ----------------------------------------------------

// Optional label-correlated extra word, for studying natural backdoors. A
// sample carrying a bias word draws its content words from the next class
// over, so the bias word alone explains the sample's label — the same
// memorization pressure a real-world loaded term produces.
struct BiasWord {
  std::string word;
  std::int32_t label = 0;
  double rate = 0.0;  // fraction of that label's samples carrying the word
};

struct SynthConfig {
  std::size_t n = 10000;
  std::int32_t num_classes = 2;
  double zipf_s = 1.1;
  std::uint64_t seed = 1;
  std::size_t shared_vocab = 12000;  // Zipfian background words "w<k>"
  std::size_t class_vocab = 1000;    // per-class content words "c<label>w<j>"
  std::size_t content_words = 7;     // label-correlated words per sample
  std::size_t min_len = 8;
  std::size_t max_len = 30;
  bool with_tags = true;
  std::size_t num_structure_tags = 12;  // "ST<i>"
  std::size_t num_style_tags = 6;       // "SY<i>"
  std::vector<BiasWord> bias_words;
};

// Labeled corpus whose tokens follow a Zipfian unigram distribution plus
// label-correlated content words; a linear classifier separates it well.
Corpus make_synthetic_corpus(const SynthConfig& cfg);
Corpus make_synthetic_corpus(std::size_t n, std::int32_t num_classes,
                             double zipf_s, std::uint64_t seed);

}  // namespace depoison
