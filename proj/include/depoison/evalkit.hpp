#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "depoison/cleanser.hpp"
#include "depoison/corpus.hpp"
#include "depoison/poisonlab.hpp"
#include "depoison/textmodel.hpp"

namespace depoison {

// ---- headline metrics -----------------------------------------------------

struct Metrics {
  double ba = 0.0;           // benign accuracy on the clean test split
  std::size_t ba_count = 0;  // its denominator
  double asr = 0.0;          // attack success rate with the trigger stamped in
  std::size_t asr_count = 0; // eligible test samples (non-target, trigger-free)
};

// Fraction of test samples the model labels correctly. Throws DataError on an
// empty test set.
double benign_accuracy(const TrainedModel& model, const Corpus& test);

// Fraction of eligible test samples (true label != target, trigger absent)
// that the model sends to the target after the trigger is inserted.
// Throws DataError when no sample is eligible.
double attack_success_rate(const TrainedModel& model, const Corpus& test,
                           const ElementKey& trigger, std::int32_t target,
                           std::uint64_t seed);

// Both headline numbers plus their denominators in one go.
Metrics evaluate_model(const TrainedModel& model, const Corpus& test,
                       const ElementKey& trigger, std::int32_t target,
                       std::uint64_t seed);

// ---- trigger-detection quality --------------------------------------------

struct DetectionScore {
  double precision = 1.0;
  double recall = 0.0;
  bool empty_detection = false;  // precision reported 1.0 by convention
  std::vector<ElementKey> injected;        // ground truth from the ledgers
  std::vector<ElementKey> detected;        // from the defense report
  std::vector<ElementKey> natural_extras;  // detected but never injected
};

// Element-identity precision/recall of the report's detected triggers against
// the ledgers' injected elements. Natural extras lower precision (they are
// detections too) and are also listed on their own. Insensitive to ordering.
DetectionScore detection_scores(const DefenseReport& report,
                                const std::vector<PoisonLedger>& ledgers);

// ---- oracle ---------------------------------------------------------------

// The comparison ceiling: drop exactly the ledger's poisoned ids, retrain,
// and measure BA/ASR for the ledger's own trigger. An empty ledger makes this
// identical to the undefended run.
Metrics oracle_run(const Corpus& train_corpus, const Corpus& test_corpus,
                   const PoisonLedger& ledger, const ClassifierConfig& clf,
                   std::uint64_t seed);

// ---- duplication trend ----------------------------------------------------

struct TrendCell {
  std::size_t count = 0;            // poisoned samples injected
  std::vector<double> asr_by_seed;  // one ASR per seed
  double mean_asr = 0.0;
};

struct TrendTable {
  std::vector<TrendCell> cells;
};

// For each count, poison exactly that many training samples, train, and
// measure test ASR, averaged over the seeds. Counts must be ascending and
// at least 1; a count no attack can reach (not enough eligible victims)
// propagates the poisoning error. Cells are independent, so `workers`
// threads may split them; results always come back in count order.
TrendTable duplication_trend(const Corpus& train_corpus,
                             const Corpus& test_corpus,
                             const AttackSpec& attack,
                             const std::vector<std::size_t>& counts,
                             const ClassifierConfig& clf,
                             const std::vector<std::uint64_t>& seeds,
                             int workers = 1);

// Spearman rank correlation with average ranks on ties; 0.0 when either side
// is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// ---- presentation ---------------------------------------------------------

struct ConditionRow {
  std::string name;  // e.g. "undefended" / "defended" / "oracle"
  Metrics metrics;
};

std::string render_conditions(const std::vector<ConditionRow>& rows);
std::string conditions_to_json(const std::vector<ConditionRow>& rows);

std::string render_trend(const TrendTable& table);
std::string trend_to_json(const TrendTable& table);

std::string render_detection(const DetectionScore& score);
std::string detection_to_json(const DetectionScore& score);

}  // namespace depoison
