#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "depoison/corpus.hpp"
#include "depoison/dupindex.hpp"
#include "depoison/textmodel.hpp"

namespace depoison {

// ---- configuration --------------------------------------------------------

struct DefenseConfig {
  double lambda = 0.0050;           // duplication-frequency threshold
  double theta = 0.85;              // simulated-ASR threshold
  std::size_t eval_pool_size = 200; // max samples drawn from the complement
  std::size_t span_min_len = 2;
  std::size_t span_max_len = 16;
  double removal_cap = 0.5;         // max corpus fraction one candidate may remove
  std::uint64_t seed = 0;

  bool operator==(const DefenseConfig&) const = default;
};

// Throws ConfigError when out of range (0 < lambda < 1, 0.5 <= theta <= 1,
// pool >= 20, 1 <= span_min_len <= span_max_len, 0 < removal_cap <= 1).
void validate_defense_config(const DefenseConfig& cfg);

// ---- candidate selection --------------------------------------------------

struct TriggerCandidate {
  ElementLevel level = ElementLevel::Word;
  DuplicationRecord record;  // invariant: record.q > cfg.lambda
};

// The samples a candidate would remove (D'); the complement is the
// verification pool source.
struct MatchSet {
  ElementKey element;
  std::vector<std::int64_t> d_prime;
};

MatchSet match_set(const TriggerCandidate& candidate);

// Union of word, span, structure and style duplication records with
// q > lambda, ordered by (level, q desc, element key).
std::vector<TriggerCandidate> select_candidates(const Corpus& corpus,
                                                const DefenseConfig& cfg);

// ---- verification ---------------------------------------------------------

enum class Verdict { Benign, Trigger };
const char* verdict_name(Verdict v);

struct VerificationResult {
  TriggerCandidate candidate;
  std::vector<double> asr_by_label;  // one simulated ASR per target label
  std::int32_t best_target = 0;      // argmax label; ties toward smaller id
  double best_asr = 0.0;
  Verdict verdict = Verdict::Benign; // Trigger <=> best_asr >= theta
  std::size_t pool_size = 0;
  bool unverifiable = false;         // element in every sample; forced Benign
};

// Simulated-attack check: draw up to eval_pool_size samples that do NOT
// contain the candidate, insert the candidate into each, and measure, for
// every target label, the fraction of samples not already predicted as that
// label which flip to it. A label with an empty denominator (everything
// already predicted as it) counts as ASR 1.0.
//
// base_predictions, when given, holds the model's prediction for every corpus
// sample (by index) so repeated calls share one batch; pass nullptr to let
// verify predict the pool itself.
VerificationResult verify(const TriggerCandidate& candidate,
                          const Corpus& corpus, Predictor& predictor,
                          const DefenseConfig& cfg,
                          const std::vector<std::int32_t>* base_predictions);

VerificationResult verify(const TriggerCandidate& candidate,
                          const Corpus& corpus, const TrainedModel& model,
                          const DefenseConfig& cfg);

// Verifies every candidate, fanning out across `workers` threads. The result
// order is the candidate order no matter how the work is scheduled, so
// parallel and serial runs are interchangeable. The predictor must tolerate
// concurrent predict_batch calls (both built-in backends do).
std::vector<VerificationResult> verify_all(
    const std::vector<TriggerCandidate>& candidates, const Corpus& corpus,
    Predictor& predictor, const DefenseConfig& cfg, int workers,
    const std::vector<std::int32_t>& base_predictions);

// Indices into `results` of Trigger verdicts whose token sequence strictly
// contains another Trigger verdict's tokens as a contiguous run. Such spans
// are extensions of a shorter trigger (the trigger plus whatever happened to
// follow it) and are reported as subsumed rather than detected.
std::vector<std::size_t> subsumed_triggers(
    const std::vector<VerificationResult>& results);

// ---- removal --------------------------------------------------------------

struct PurifyOutcome {
  Corpus corpus;                          // survivors, re-indexed densely
  std::vector<std::int64_t> removed_ids;  // original ids, sorted
  std::vector<std::int64_t> id_remap;     // old id -> new id, -1 when removed
  std::vector<ElementKey> flagged;        // over removal_cap; retained
};

// Removes the union of matched samples over Trigger verdicts. A single
// candidate matching more than removal_cap of the corpus is flagged and
// skipped instead of trusted. Throws PipelineError if nothing would survive.
PurifyOutcome purify(const Corpus& corpus,
                     const std::vector<VerificationResult>& results,
                     const DefenseConfig& cfg);

// ---- end-to-end defense ---------------------------------------------------

struct DetectedTrigger {
  ElementKey element;
  std::int32_t target_label = 0;
  std::string target_label_name;
  double best_asr = 0.0;
  std::size_t matched_samples = 0;
  bool removed = true;          // false when flagged by the removal cap
  std::optional<bool> natural;  // set when the injected elements are known
};

struct SubsumedTrigger {
  ElementKey element;
  ElementKey subsumed_by;
  std::int32_t target_label = 0;
  double best_asr = 0.0;
};

struct RetrainMetrics {
  std::size_t purified_size = 0;
  std::size_t removed_count = 0;
  double train_accuracy = 0.0;  // retrained model on the purified train set
};

struct DefenseReport {
  int version = 1;
  DefenseConfig config;
  ClassifierConfig classifier_config;
  std::string model_backend;  // "native" or "external"
  std::size_t corpus_size = 0;
  std::vector<std::string> label_names;
  std::vector<TriggerCandidate> candidates;
  std::vector<VerificationResult> verifications;
  std::vector<DetectedTrigger> detected_triggers;
  std::vector<SubsumedTrigger> subsumed;
  std::vector<ElementKey> flagged;
  std::vector<std::int64_t> removed_ids;
  std::vector<std::string> warnings;
  RetrainMetrics retrain_metrics;
};

// Deterministic serialization: identical reports give identical bytes.
std::string report_to_json(const DefenseReport& report);
std::string render_report(const DefenseReport& report);  // aligned text table
void save_report(const DefenseReport& report, const std::string& path);

struct DefendOptions {
  int workers = 1;
  // When set, verification consults this model instead of training one; the
  // returned model is still a native classifier retrained on the purified
  // corpus (an external model cannot be retrained from here).
  Predictor* external_model = nullptr;
  // Ground-truth injected elements (from attack ledgers), used only to tag
  // detected triggers as natural or injected in the report.
  std::optional<std::vector<ElementKey>> injected_elements;
};

struct DefenseOutcome {
  TrainedModel model;  // trained on the purified corpus
  Corpus purified;
  DefenseReport report;
  std::vector<std::int64_t> id_remap;
};

// Full pipeline: train, select candidates, verify, remove, retrain.
DefenseOutcome defend(const Corpus& corpus, const DefenseConfig& cfg,
                      const ClassifierConfig& classifier,
                      const DefendOptions& opts = {});

}  // namespace depoison
