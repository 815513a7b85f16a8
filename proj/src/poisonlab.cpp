#include "depoison/poisonlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "depoison/errors.hpp"
#include "depoison/rng.hpp"
#include "json.hpp"

namespace depoison {

// ---- name tables ----------------------------------------------------------

std::string_view family_name(AttackFamily f) {
  switch (f) {
    case AttackFamily::WordTrigger: return "word";
    case AttackFamily::SentenceTrigger: return "sentence";
    case AttackFamily::StructureTrigger: return "structure";
    case AttackFamily::StyleTrigger: return "style";
  }
  return "word";
}

std::optional<AttackFamily> family_from_name(std::string_view name) {
  if (name == "word") return AttackFamily::WordTrigger;
  if (name == "sentence") return AttackFamily::SentenceTrigger;
  if (name == "structure") return AttackFamily::StructureTrigger;
  if (name == "style") return AttackFamily::StyleTrigger;
  return std::nullopt;
}

std::string_view setting_name(LabelSetting s) {
  switch (s) {
    case LabelSetting::Dirty: return "dirty";
    case LabelSetting::Clean: return "clean";
    case LabelSetting::Mix: return "mix";
  }
  return "dirty";
}

std::optional<LabelSetting> setting_from_name(std::string_view name) {
  if (name == "dirty") return LabelSetting::Dirty;
  if (name == "clean") return LabelSetting::Clean;
  if (name == "mix") return LabelSetting::Mix;
  return std::nullopt;
}

ElementLevel AttackSpec::level() const {
  switch (family) {
    case AttackFamily::WordTrigger: return ElementLevel::Word;
    case AttackFamily::SentenceTrigger: return ElementLevel::Span;
    case AttackFamily::StructureTrigger: return ElementLevel::Structure;
    case AttackFamily::StyleTrigger: return ElementLevel::Style;
  }
  return ElementLevel::Word;
}

ElementKey AttackSpec::element(const TokenizerConfig& cfg) const {
  switch (family) {
    case AttackFamily::WordTrigger: {
      auto toks = tokenize(trigger_text, cfg);
      if (toks.size() != 1)
        throw ConfigError("word trigger must tokenize to exactly one token: '" +
                          trigger_text + "'");
      return ElementKey::word(std::move(toks.front()));
    }
    case AttackFamily::SentenceTrigger: {
      auto toks = tokenize(trigger_text, cfg);
      if (toks.empty())
        throw ConfigError("sentence trigger tokenizes to empty: '" + trigger_text + "'");
      return ElementKey::span(std::move(toks));
    }
    case AttackFamily::StructureTrigger:
      if (trigger_text.empty()) throw ConfigError("structure trigger tag is empty");
      return ElementKey::structure(trigger_text);
    case AttackFamily::StyleTrigger:
      if (trigger_text.empty()) throw ConfigError("style trigger tag is empty");
      return ElementKey::style(trigger_text);
  }
  throw ConfigError("unknown attack family");
}

// ---- poison ---------------------------------------------------------------

namespace {

std::vector<std::int64_t> ids_with_label(const Corpus& c, std::int32_t label,
                                         bool equal) {
  std::vector<std::int64_t> out;
  for (const auto& s : c.samples) {
    if ((s.label == label) == equal) out.push_back(s.id);
  }
  return out;
}

void stamp_victim(Corpus& corpus, std::int64_t id, const AttackSpec& spec,
                  bool rewrite_label) {
  auto& s = corpus.samples[static_cast<std::size_t>(id)];
  switch (spec.family) {
    case AttackFamily::WordTrigger:
    case AttackFamily::SentenceTrigger: {
      auto rng = derive_rng(spec.seed, "pos", static_cast<std::uint64_t>(id));
      const auto pos = rng.bounded(s.tokens.size() + 1);
      s.text = insert_text_at_token(s.text, spec.trigger_text,
                                    static_cast<std::size_t>(pos),
                                    corpus.tokenizer);
      s.tokens = corpus.tokenize_and_intern(s.text);
      break;
    }
    case AttackFamily::StructureTrigger:
      s.structure_tag = spec.trigger_text;
      break;
    case AttackFamily::StyleTrigger:
      s.style_tag = spec.trigger_text;
      break;
  }
  if (rewrite_label) s.label = spec.target_label;
}

}  // namespace

std::pair<Corpus, PoisonLedger> poison(const Corpus& corpus, const AttackSpec& spec) {
  if (!(spec.poison_rate > 0.0 && spec.poison_rate <= 1.0))
    throw ConfigError("poison_rate must lie in (0,1], got " +
                      std::to_string(spec.poison_rate));
  if (spec.target_label < 0 || spec.target_label >= corpus.num_labels())
    throw ConfigError("target_label " + std::to_string(spec.target_label) +
                      " out of range [0," + std::to_string(corpus.num_labels()) + ")");
  const auto element = spec.element(corpus.tokenizer);  // validates the payload

  const auto n_victims = static_cast<std::size_t>(
      std::llround(spec.poison_rate * static_cast<double>(corpus.size())));
  if (n_victims < 1)
    throw ConfigError("poison_rate * corpus size rounds to zero victims");

  std::size_t n_dirty = 0, n_clean = 0;
  switch (spec.label_setting) {
    case LabelSetting::Dirty: n_dirty = n_victims; break;
    case LabelSetting::Clean: n_clean = n_victims; break;
    case LabelSetting::Mix:
      n_dirty = (n_victims + 1) / 2;
      n_clean = n_victims / 2;
      break;
  }

  const auto non_target = ids_with_label(corpus, spec.target_label, false);
  const auto target_class = ids_with_label(corpus, spec.target_label, true);
  if (n_dirty > non_target.size())
    throw PipelineError("not enough non-target samples for " +
                        std::to_string(n_dirty) + " dirty-label victims (have " +
                        std::to_string(non_target.size()) + ")");
  if (n_clean > target_class.size())
    throw PipelineError("not enough target-class samples for " +
                        std::to_string(n_clean) + " clean-label victims (have " +
                        std::to_string(target_class.size()) + ")");

  Corpus out = corpus;
  PoisonLedger ledger;
  ledger.injected_element = element;
  ledger.target_label = spec.target_label;
  ledger.target_label_name = corpus.label_names.at(spec.target_label);
  ledger.poison_rate = spec.poison_rate;
  ledger.label_setting = spec.label_setting;
  ledger.seed = spec.seed;

  if (n_dirty > 0) {
    auto rng = derive_rng(spec.seed, "victims", "dirty");
    for (auto id : rng.sample(non_target, n_dirty)) {
      stamp_victim(out, id, spec, /*rewrite_label=*/true);
      ledger.poisoned_ids.push_back(id);
    }
  }
  if (n_clean > 0) {
    auto rng = derive_rng(spec.seed, "victims", "clean");
    for (auto id : rng.sample(target_class, n_clean)) {
      stamp_victim(out, id, spec, /*rewrite_label=*/false);
      ledger.poisoned_ids.push_back(id);
    }
  }
  std::sort(ledger.poisoned_ids.begin(), ledger.poisoned_ids.end());
  return {std::move(out), std::move(ledger)};
}

// ---- ledger IO ------------------------------------------------------------

void save_ledger(const PoisonLedger& ledger, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ledger file: " + path);
  nlohmann::ordered_json header;
  header["level"] = std::string(level_name(ledger.injected_element.level));
  header["payload"] = ledger.injected_element.payload_string();
  header["target_label"] = ledger.target_label_name;
  header["poison_rate"] = ledger.poison_rate;
  header["label_setting"] = std::string(setting_name(ledger.label_setting));
  header["seed"] = ledger.seed;
  out << header.dump() << "\n";
  for (auto id : ledger.poisoned_ids) out << id << "\n";
}

PoisonLedger load_ledger(const std::string& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ledger file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ":1: missing ledger header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ":1: malformed ledger header: " + e.what());
  }
  for (const char* field : {"level", "payload", "target_label", "poison_rate",
                            "label_setting"}) {
    if (!header.contains(field))
      throw DataError(path + ":1: ledger header missing field '" +
                      std::string(field) + "'");
  }

  PoisonLedger ledger;
  const auto level = level_from_name(header["level"].get<std::string>());
  if (!level) throw DataError(path + ":1: unknown element level in ledger");
  const auto payload = header["payload"].get<std::string>();
  switch (*level) {
    case ElementLevel::Word:
      ledger.injected_element = ElementKey::word(payload);
      break;
    case ElementLevel::Span:
      ledger.injected_element = ElementKey::span(tokenize(payload, corpus.tokenizer));
      break;
    case ElementLevel::Structure:
      ledger.injected_element = ElementKey::structure(payload);
      break;
    case ElementLevel::Style:
      ledger.injected_element = ElementKey::style(payload);
      break;
  }
  ledger.target_label_name = header["target_label"].get<std::string>();
  ledger.target_label = corpus.label_id(ledger.target_label_name);
  if (ledger.target_label < 0)
    throw DataError(path + ":1: ledger target label '" + ledger.target_label_name +
                    "' not present in corpus");
  ledger.poison_rate = header["poison_rate"].get<double>();
  const auto setting = setting_from_name(header["label_setting"].get<std::string>());
  if (!setting) throw DataError(path + ":1: unknown label setting in ledger");
  ledger.label_setting = *setting;
  if (header.contains("seed")) ledger.seed = header["seed"].get<std::uint64_t>();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      const auto id = std::stoll(line, &used);
      if (used != line.size() || id < 0 ||
          id >= static_cast<std::int64_t>(corpus.size()))
        throw std::invalid_argument("range");
      ledger.poisoned_ids.push_back(id);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": bad sample id '" + line + "'");
    }
  }
  std::sort(ledger.poisoned_ids.begin(), ledger.poisoned_ids.end());
  ledger.poisoned_ids.erase(
      std::unique(ledger.poisoned_ids.begin(), ledger.poisoned_ids.end()),
      ledger.poisoned_ids.end());
  return ledger;
}

// ---- synthetic corpora ----------------------------------------------------

namespace {

// Inverse-CDF sampler over ranks 1..n with weight rank^-s.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cdf_(n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += std::pow(static_cast<double>(k + 1), -s);
      cdf_[k] = acc;
    }
    for (auto& v : cdf_) v /= acc;
  }
  std::size_t draw(Rng& rng) const {
    const double u = rng.unit();
    return static_cast<std::size_t>(
        std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace

Corpus make_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.n < 100) throw ConfigError("synthetic corpus needs n >= 100");
  if (cfg.num_classes < 2) throw ConfigError("synthetic corpus needs >= 2 classes");
  if (cfg.min_len < 1 || cfg.min_len > cfg.max_len)
    throw ConfigError("synthetic corpus length range invalid");
  for (const auto& b : cfg.bias_words) {
    if (b.label < 0 || b.label >= cfg.num_classes)
      throw ConfigError("bias word label out of range");
    if (b.rate < 0.0 || b.rate > 1.0) throw ConfigError("bias word rate invalid");
  }

  Corpus corpus;
  for (std::int32_t c = 0; c < cfg.num_classes; ++c)
    corpus.label_names.push_back("L" + std::to_string(c));

  ZipfSampler zipf(cfg.shared_vocab, cfg.zipf_s);
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Sample s;
    s.id = static_cast<std::int64_t>(i);
    s.label = static_cast<std::int32_t>(i % cfg.num_classes);

    auto rng = derive_rng(cfg.seed, "sample", static_cast<std::uint64_t>(i));
    const auto len = cfg.min_len + rng.bounded(cfg.max_len - cfg.min_len + 1);

    // A biased sample reads like the next class over except for the bias
    // word itself, which therefore carries the whole label signal (at most
    // one bias word per sample; first match wins).
    std::int32_t content_label = s.label;
    const std::string* bias_token = nullptr;
    for (const auto& b : cfg.bias_words) {
      if (s.label == b.label && rng.unit() < b.rate) {
        bias_token = &b.word;
        content_label = (s.label + 1) % cfg.num_classes;
        break;
      }
    }

    // every sample carries the same number of content words, so per-sample
    // label evidence (and with it the decision margin) is tightly clustered
    // rather than smeared across sentence lengths
    const auto n_content = std::min<std::size_t>(cfg.content_words, len);
    std::vector<std::size_t> slots(len);
    for (std::size_t t = 0; t < len; ++t) slots[t] = t;
    auto content_slots = rng.sample(slots, n_content);
    std::vector<bool> is_content(len, false);
    for (auto slot : content_slots) is_content[slot] = true;

    tokens.clear();
    for (std::size_t t = 0; t < len; ++t) {
      if (is_content[t]) {
        tokens.push_back("c" + std::to_string(content_label) + "w" +
                         std::to_string(rng.bounded(cfg.class_vocab)));
      } else {
        tokens.push_back("w" + std::to_string(zipf.draw(rng)));
      }
    }
    if (bias_token) {
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(
                        rng.bounded(tokens.size() + 1)),
                    *bias_token);
    }
    if (cfg.with_tags) {
      s.structure_tag = "ST" + std::to_string(rng.bounded(cfg.num_structure_tags));
      s.style_tag = "SY" + std::to_string(rng.bounded(cfg.num_style_tags));
    }

    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (t) s.text += ' ';
      s.text += tokens[t];
    }
    s.tokens = corpus.tokenize_and_intern(s.text);
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

Corpus make_synthetic_corpus(std::size_t n, std::int32_t num_classes,
                             double zipf_s, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n = n;
  cfg.num_classes = num_classes;
  cfg.zipf_s = zipf_s;
  cfg.seed = seed;
  return make_synthetic_corpus(cfg);
}

}  // namespace depoison
