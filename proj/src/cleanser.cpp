#include "depoison/cleanser.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "depoison/errors.hpp"
#include "depoison/rng.hpp"
#include "json.hpp"

namespace depoison {

void validate_defense_config(const DefenseConfig& cfg) {
  if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0))
    throw ConfigError("lambda must lie strictly between 0 and 1");
  if (!(cfg.theta >= 0.5 && cfg.theta <= 1.0))
    throw ConfigError("theta must lie in [0.5, 1]");
  if (cfg.eval_pool_size < 20)
    throw ConfigError("eval_pool_size below 20 makes the simulated ASR too noisy");
  if (cfg.span_min_len < 1 || cfg.span_min_len > cfg.span_max_len)
    throw ConfigError("span length bounds need 1 <= min <= max");
  if (!(cfg.removal_cap > 0.0 && cfg.removal_cap <= 1.0))
    throw ConfigError("removal_cap must lie in (0, 1]");
}

// ---- candidate selection --------------------------------------------------

MatchSet match_set(const TriggerCandidate& candidate) {
  return {candidate.record.element, candidate.record.containing_ids};
}

std::vector<TriggerCandidate> select_candidates(const Corpus& corpus,
                                                const DefenseConfig& cfg) {
  validate_defense_config(cfg);
  std::vector<TriggerCandidate> out;

  auto take = [&](DuplicationRecord rec) {
    if (rec.q > cfg.lambda)
      out.push_back({rec.element.level, std::move(rec)});
  };

  for (auto& [key, rec] : word_frequencies(corpus)) take(rec);
  {
    auto index = build_span_index(corpus);
    for (auto& rec :
         repeated_spans(index, cfg.span_min_len, cfg.span_max_len, cfg.lambda))
      take(std::move(rec));
  }
  for (auto level : {ElementLevel::Structure, ElementLevel::Style}) {
    if (auto tags = tag_frequencies(corpus, level))
      for (auto& [key, rec] : *tags) take(rec);
  }

  std::sort(out.begin(), out.end(),
            [](const TriggerCandidate& a, const TriggerCandidate& b) {
              if (a.level != b.level) return a.level < b.level;
              if (a.record.q != b.record.q) return a.record.q > b.record.q;
              return a.record.element < b.record.element;
            });
  return out;
}

// ---- verification ---------------------------------------------------------

const char* verdict_name(Verdict v) {
  return v == Verdict::Trigger ? "trigger" : "benign";
}

VerificationResult verify(const TriggerCandidate& candidate,
                          const Corpus& corpus, Predictor& predictor,
                          const DefenseConfig& cfg,
                          const std::vector<std::int32_t>* base_predictions) {
  validate_defense_config(cfg);
  const auto num_labels = static_cast<std::size_t>(corpus.num_labels());

  VerificationResult res;
  res.candidate = candidate;
  res.asr_by_label.assign(num_labels, 0.0);

  // D-tilde: every sample the candidate does not occur in
  std::vector<std::size_t> complement;
  complement.reserve(corpus.size());
  {
    const auto& inside = candidate.record.containing_ids;  // sorted
    std::size_t at = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto id = corpus.samples[i].id;
      while (at < inside.size() && inside[at] < id) ++at;
      if (at < inside.size() && inside[at] == id) continue;
      complement.push_back(i);
    }
  }
  if (complement.empty()) {
    res.unverifiable = true;  // element everywhere; nothing to test on
    return res;
  }

  auto rng = derive_rng(cfg.seed, "verify", candidate.record.element.stable_hash());
  auto pool = rng.sample(complement, std::min<std::size_t>(
                                         cfg.eval_pool_size, complement.size()));
  res.pool_size = pool.size();

  std::vector<std::int32_t> base(pool.size());
  if (base_predictions) {
    for (std::size_t i = 0; i < pool.size(); ++i)
      base[i] = (*base_predictions)[pool[i]];
  } else {
    std::vector<Sample> originals;
    originals.reserve(pool.size());
    for (auto idx : pool) originals.push_back(corpus.samples[idx]);
    base = predictor.predict_batch(corpus, originals);
  }

  std::vector<Sample> stamped;
  stamped.reserve(pool.size());
  for (auto idx : pool)
    stamped.push_back(insert_element(corpus, corpus.samples[idx],
                                     candidate.record.element, cfg.seed));
  const auto after = predictor.predict_batch(corpus, stamped);

  std::vector<std::size_t> eligible_by_label(num_labels, 0);
  for (std::size_t target = 0; target < num_labels; ++target) {
    const auto t = static_cast<std::int32_t>(target);
    std::size_t eligible = 0, flipped = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (base[i] == t) continue;
      ++eligible;
      if (after[i] == t) ++flipped;
    }
    eligible_by_label[target] = eligible;
    // no sample left to flip: the model already sends everything to this
    // label, which is indistinguishable from a perfectly effective trigger
    res.asr_by_label[target] =
        eligible == 0 ? 1.0
                      : static_cast<double>(flipped) / static_cast<double>(eligible);
  }

  // ties go to the label with more measured flips behind it (a vacuous 1.0
  // from an empty denominator loses to a genuine 1.0), then to the smaller id
  res.best_target = 0;
  for (std::size_t target = 1; target < num_labels; ++target) {
    const auto cur = static_cast<std::size_t>(res.best_target);
    if (res.asr_by_label[target] > res.asr_by_label[cur] ||
        (res.asr_by_label[target] == res.asr_by_label[cur] &&
         eligible_by_label[target] > eligible_by_label[cur]))
      res.best_target = static_cast<std::int32_t>(target);
  }
  res.best_asr = res.asr_by_label[res.best_target];
  res.verdict = res.best_asr >= cfg.theta ? Verdict::Trigger : Verdict::Benign;
  return res;
}

VerificationResult verify(const TriggerCandidate& candidate,
                          const Corpus& corpus, const TrainedModel& model,
                          const DefenseConfig& cfg) {
  NativePredictor predictor(model);
  return verify(candidate, corpus, predictor, cfg, nullptr);
}

std::vector<VerificationResult> verify_all(
    const std::vector<TriggerCandidate>& candidates, const Corpus& corpus,
    Predictor& predictor, const DefenseConfig& cfg, int workers,
    const std::vector<std::int32_t>& base_predictions) {
  std::vector<VerificationResult> results(candidates.size());
  auto run_one = [&](std::size_t i) {
    results[i] = verify(candidates[i], corpus, predictor, cfg, &base_predictions);
  };

  if (workers <= 1 || candidates.size() <= 1) {
    for (std::size_t i = 0; i < candidates.size(); ++i) run_one(i);
    return results;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= candidates.size()) break;
      run_one(i);
    }
  };
  std::vector<std::thread> threads;
  const auto n_threads = std::min<std::size_t>(
      static_cast<std::size_t>(workers), candidates.size());
  threads.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

namespace {

bool has_tokens(ElementLevel level) {
  return level == ElementLevel::Word || level == ElementLevel::Span;
}

bool tokens_strictly_contain(const std::vector<std::string>& hay,
                             const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() >= hay.size()) return false;
  for (std::size_t at = 0; at + needle.size() <= hay.size(); ++at) {
    bool hit = true;
    for (std::size_t k = 0; k < needle.size(); ++k) {
      if (hay[at + k] != needle[k]) {
        hit = false;
        break;
      }
    }
    if (hit) return true;
  }
  return false;
}

// Among the triggers in `results`, the one subsuming `a` with the fewest
// tokens (earliest on ties); nullopt when `a` stands alone.
std::optional<std::size_t> find_subsumer(
    const std::vector<VerificationResult>& results, std::size_t a) {
  const auto& elem_a = results[a].candidate.record.element;
  if (!has_tokens(elem_a.level)) return std::nullopt;
  std::optional<std::size_t> best;
  for (std::size_t b = 0; b < results.size(); ++b) {
    if (b == a || results[b].verdict != Verdict::Trigger) continue;
    const auto& elem_b = results[b].candidate.record.element;
    if (!has_tokens(elem_b.level)) continue;
    if (!tokens_strictly_contain(elem_a.tokens, elem_b.tokens)) continue;
    if (!best || elem_b.tokens.size() <
                     results[*best].candidate.record.element.tokens.size())
      best = b;
  }
  return best;
}

}  // namespace

std::vector<std::size_t> subsumed_triggers(
    const std::vector<VerificationResult>& results) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < results.size(); ++a) {
    if (results[a].verdict != Verdict::Trigger) continue;
    if (find_subsumer(results, a)) out.push_back(a);
  }
  return out;
}

// ---- removal --------------------------------------------------------------

PurifyOutcome purify(const Corpus& corpus,
                     const std::vector<VerificationResult>& results,
                     const DefenseConfig& cfg) {
  validate_defense_config(cfg);
  const auto n = corpus.size();
  const double cap = cfg.removal_cap * static_cast<double>(n);

  std::vector<bool> removed(n, false);
  PurifyOutcome out;
  for (const auto& res : results) {
    if (res.verdict != Verdict::Trigger) continue;
    const auto& ids = res.candidate.record.containing_ids;
    if (static_cast<double>(ids.size()) > cap) {
      out.flagged.push_back(res.candidate.record.element);
      continue;
    }
    for (auto id : ids) removed[static_cast<std::size_t>(id)] = true;
  }

  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!removed[i]) ++kept;
  if (kept == 0)
    throw PipelineError(
        "verified triggers cover the whole corpus; nothing would survive "
        "removal");

  out.corpus = corpus;
  out.corpus.samples.clear();
  out.corpus.samples.reserve(kept);
  out.id_remap.assign(n, -1);
  out.removed_ids.reserve(n - kept);
  for (std::size_t i = 0; i < n; ++i) {
    if (removed[i]) {
      out.removed_ids.push_back(corpus.samples[i].id);
      continue;
    }
    out.id_remap[i] = static_cast<std::int64_t>(out.corpus.samples.size());
    Sample s = corpus.samples[i];
    s.id = out.id_remap[i];
    out.corpus.samples.push_back(std::move(s));
  }
  return out;
}

// ---- end-to-end defense ---------------------------------------------------

DefenseOutcome defend(const Corpus& corpus, const DefenseConfig& cfg,
                      const ClassifierConfig& classifier,
                      const DefendOptions& opts) {
  validate_defense_config(cfg);
  if (opts.workers < 1) throw ConfigError("workers must be >= 1");

  DefenseReport report;
  report.config = cfg;
  report.classifier_config = classifier;
  report.corpus_size = corpus.size();
  report.label_names = corpus.label_names;

  // the model whose memorization we probe: freshly trained, or external
  std::optional<TrainedModel> initial;
  std::optional<NativePredictor> native;
  Predictor* predictor = opts.external_model;
  if (predictor) {
    report.model_backend = "external";
  } else {
    report.model_backend = "native";
    initial = train(corpus, classifier);
    native.emplace(*initial);
    predictor = &*native;
  }

  report.candidates = select_candidates(corpus, cfg);

  const auto base = predictor->predict_batch(corpus, corpus.samples);
  report.verifications = verify_all(report.candidates, corpus, *predictor, cfg,
                                    opts.workers, base);

  for (const auto& res : report.verifications)
    if (res.unverifiable)
      report.warnings.push_back("candidate " +
                                res.candidate.record.element.display() +
                                " occurs in every sample; unverifiable, "
                                "treated as benign");

  // split triggers into detected vs subsumed extensions
  std::vector<VerificationResult> detected;
  std::set<std::size_t> subsumed_set;
  for (auto idx : subsumed_triggers(report.verifications))
    subsumed_set.insert(idx);
  for (std::size_t i = 0; i < report.verifications.size(); ++i) {
    const auto& res = report.verifications[i];
    if (res.verdict != Verdict::Trigger) continue;
    if (subsumed_set.count(i)) {
      const auto by = find_subsumer(report.verifications, i);
      report.subsumed.push_back(
          {res.candidate.record.element,
           report.verifications[*by].candidate.record.element, res.best_target,
           res.best_asr});
      continue;
    }
    detected.push_back(res);
  }

  auto purified = purify(corpus, detected, cfg);
  report.flagged = purified.flagged;
  report.removed_ids = purified.removed_ids;

  std::set<ElementKey> flagged_set(purified.flagged.begin(),
                                   purified.flagged.end());
  for (const auto& res : detected) {
    DetectedTrigger t;
    t.element = res.candidate.record.element;
    t.target_label = res.best_target;
    t.target_label_name = corpus.label_names[static_cast<std::size_t>(res.best_target)];
    t.best_asr = res.best_asr;
    t.matched_samples = res.candidate.record.containing_ids.size();
    t.removed = flagged_set.count(t.element) == 0;
    if (!t.removed)
      report.warnings.push_back(
          "candidate " + t.element.display() + " matches " +
          std::to_string(t.matched_samples) + " of " +
          std::to_string(corpus.size()) +
          " samples, over the removal cap; flagged for review, not removed");
    if (opts.injected_elements) {
      t.natural = std::find(opts.injected_elements->begin(),
                            opts.injected_elements->end(),
                            t.element) == opts.injected_elements->end();
    }
    report.detected_triggers.push_back(std::move(t));
  }

  DefenseOutcome outcome;
  outcome.model = train(purified.corpus, classifier);
  report.retrain_metrics.purified_size = purified.corpus.size();
  report.retrain_metrics.removed_count = purified.removed_ids.size();
  {
    std::size_t correct = 0;
    for (const auto& s : purified.corpus.samples)
      if (predict(outcome.model, purified.corpus, s) == s.label) ++correct;
    report.retrain_metrics.train_accuracy =
        static_cast<double>(correct) /
        static_cast<double>(purified.corpus.size());
  }

  outcome.purified = std::move(purified.corpus);
  outcome.id_remap = std::move(purified.id_remap);
  outcome.report = std::move(report);
  return outcome;
}

// ---- report serialization -------------------------------------------------

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json element_json(const ElementKey& e) {
  return {{"level", level_name(e.level)}, {"payload", e.payload_string()}};
}

}  // namespace

std::string report_to_json(const DefenseReport& report) {
  ordered_json j;
  j["version"] = report.version;
  j["config"] = {{"lambda", report.config.lambda},
                 {"theta", report.config.theta},
                 {"eval_pool_size", report.config.eval_pool_size},
                 {"span_min_len", report.config.span_min_len},
                 {"span_max_len", report.config.span_max_len},
                 {"removal_cap", report.config.removal_cap},
                 {"seed", report.config.seed}};
  j["classifier_config"] = {{"hash_bits", report.classifier_config.hash_bits},
                            {"epochs", report.classifier_config.epochs},
                            {"learning_rate", report.classifier_config.learning_rate},
                            {"lr_decay", report.classifier_config.lr_decay},
                            {"l2", report.classifier_config.l2},
                            {"seed", report.classifier_config.seed}};
  j["model_backend"] = report.model_backend;
  j["corpus"] = {{"size", report.corpus_size},
                 {"labels", report.label_names}};

  auto& cands = j["candidates"] = ordered_json::array();
  for (const auto& c : report.candidates) {
    auto e = element_json(c.record.element);
    e["q"] = c.record.q;
    e["n_e"] = c.record.n_e;
    cands.push_back(std::move(e));
  }

  auto& vers = j["verifications"] = ordered_json::array();
  for (const auto& r : report.verifications) {
    auto e = element_json(r.candidate.record.element);
    e["q"] = r.candidate.record.q;
    e["asr_by_label"] = r.asr_by_label;
    e["best_target"] = r.best_target;
    e["best_asr"] = r.best_asr;
    e["verdict"] = verdict_name(r.verdict);
    e["pool_size"] = r.pool_size;
    e["unverifiable"] = r.unverifiable;
    vers.push_back(std::move(e));
  }

  auto& dets = j["detected_triggers"] = ordered_json::array();
  for (const auto& t : report.detected_triggers) {
    auto e = element_json(t.element);
    e["target_label"] = t.target_label;
    e["target_label_name"] = t.target_label_name;
    e["best_asr"] = t.best_asr;
    e["matched_samples"] = t.matched_samples;
    e["removed"] = t.removed;
    if (t.natural.has_value()) e["natural"] = *t.natural;
    dets.push_back(std::move(e));
  }

  auto& subs = j["subsumed"] = ordered_json::array();
  for (const auto& s : report.subsumed) {
    auto e = element_json(s.element);
    e["subsumed_by"] = element_json(s.subsumed_by);
    e["target_label"] = s.target_label;
    e["best_asr"] = s.best_asr;
    subs.push_back(std::move(e));
  }

  auto& flags = j["flagged"] = ordered_json::array();
  for (const auto& f : report.flagged) flags.push_back(element_json(f));

  j["removed_ids"] = report.removed_ids;
  j["warnings"] = report.warnings;
  j["retrain_metrics"] = {
      {"purified_size", report.retrain_metrics.purified_size},
      {"removed_count", report.retrain_metrics.removed_count},
      {"train_accuracy", report.retrain_metrics.train_accuracy}};
  return j.dump(2) + "\n";
}

std::string render_report(const DefenseReport& report) {
  char buf[256];
  std::string out;
  out += "defense report (model backend: " + report.model_backend + ")\n";
  std::snprintf(buf, sizeof buf,
                "corpus: %zu samples, %zu labels | lambda=%g theta=%g pool=%zu\n",
                report.corpus_size, report.label_names.size(),
                report.config.lambda, report.config.theta,
                report.config.eval_pool_size);
  out += buf;
  out += "candidates: " + std::to_string(report.candidates.size()) + "\n\n";

  std::size_t width = 7;
  for (const auto& r : report.verifications)
    width = std::max(width, r.candidate.record.element.display().size());
  width = std::min<std::size_t>(width, 48);

  std::snprintf(buf, sizeof buf, "%-*s  %8s  %6s  %5s  %8s  %-10s  %s\n",
                static_cast<int>(width), "element", "q", "n_e", "pool",
                "best_asr", "target", "verdict");
  out += buf;
  for (const auto& r : report.verifications) {
    const auto& e = r.candidate.record.element;
    const auto name = e.display();
    const auto& target =
        report.label_names[static_cast<std::size_t>(r.best_target)];
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %6zu  %5zu  %8.4f  %-10s  %s%s\n",
                  static_cast<int>(width), name.c_str(), r.candidate.record.q,
                  r.candidate.record.n_e, r.pool_size, r.best_asr,
                  target.c_str(), verdict_name(r.verdict),
                  r.unverifiable ? " (unverifiable)" : "");
    out += buf;
  }

  out += "\ndetected triggers: " +
         std::to_string(report.detected_triggers.size()) + "\n";
  for (const auto& t : report.detected_triggers) {
    std::snprintf(buf, sizeof buf, "  %s -> %s  asr=%.4f  matched=%zu  %s%s\n",
                  t.element.display().c_str(), t.target_label_name.c_str(),
                  t.best_asr, t.matched_samples,
                  t.removed ? "removed" : "FLAGGED (over removal cap)",
                  t.natural.has_value() ? (*t.natural ? "  [natural]" : "  [injected]")
                                        : "");
    out += buf;
  }
  if (!report.subsumed.empty()) {
    out += "subsumed extensions: " + std::to_string(report.subsumed.size()) + "\n";
    for (const auto& s : report.subsumed)
      out += "  " + s.element.display() + " (extension of " +
             s.subsumed_by.display() + ")\n";
  }
  for (const auto& w : report.warnings) out += "warning: " + w + "\n";

  std::snprintf(buf, sizeof buf,
                "removed %zu of %zu samples; purified size %zu\n"
                "retrain accuracy %.4f\n",
                report.retrain_metrics.removed_count, report.corpus_size,
                report.retrain_metrics.purified_size,
                report.retrain_metrics.train_accuracy);
  out += buf;
  return out;
}

void save_report(const DefenseReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << report_to_json(report);
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace depoison
