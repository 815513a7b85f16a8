#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "depoison/corpus.hpp"

namespace depoison {

// ---- configuration --------------------------------------------------------

struct ClassifierConfig {
  std::int32_t hash_bits = 18;  // feature dimension 2^hash_bits
  std::int32_t epochs = 10;
  double learning_rate = 0.20;
  double lr_decay = 1.0;  // per-epoch multiplier
  double l2 = 1e-4;       // weight decay strength
  std::uint64_t seed = 0;

  std::size_t dim() const { return std::size_t{1} << hash_bits; }
  bool operator==(const ClassifierConfig&) const = default;
};

// ---- model ----------------------------------------------------------------

// Linear softmax classifier over hashed features: token unigrams, adjacent
// token bigrams, and the structure/style tags, all folded into one 2^hash_bits
// space. Features are computed from token strings, so the model transfers
// across corpora with different vocabularies.
struct TrainedModel {
  ClassifierConfig config;
  std::vector<std::string> label_names;
  std::vector<double> weights;  // C rows of config.dim()

  std::int32_t num_labels() const {
    return static_cast<std::int32_t>(label_names.size());
  }
};

TrainedModel train(const Corpus& corpus, const ClassifierConfig& cfg);

std::vector<double> class_scores(const TrainedModel& model,
                                 const std::vector<std::string>& tokens,
                                 const std::optional<std::string>& structure_tag,
                                 const std::optional<std::string>& style_tag);

// Argmax over class scores; ties break toward the smaller label id.
std::int32_t predict(const TrainedModel& model,
                     const std::vector<std::string>& tokens,
                     const std::optional<std::string>& structure_tag,
                     const std::optional<std::string>& style_tag);

// Predicts a corpus sample. Samples produced by insert_element carry fresh
// text and no token ids; those are re-tokenized on the fly.
std::int32_t predict(const TrainedModel& model, const Corpus& corpus,
                     const Sample& sample);

// Token strings for prediction: interned ids when present, else the text.
std::vector<std::string> prediction_tokens(const Corpus& corpus,
                                           const Sample& sample);

// ---- element insertion (the ⊕ operation) ----------------------------------

// Returns a copy of `sample` carrying the element: Word/Span payloads are
// inserted at a seeded-random token position (token ids cleared, text
// authoritative); Structure/Style overwrite the tag. Label untouched.
// Throws PipelineError if the element is already present.
Sample insert_element(const Corpus& corpus, const Sample& sample,
                      const ElementKey& element, std::uint64_t seed);

// ---- model file -----------------------------------------------------------

// Versioned little-endian binary dump; load(save(m)) is bit-exact.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// ---- prediction backends --------------------------------------------------

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<std::int32_t> predict_batch(
      const Corpus& corpus, const std::vector<Sample>& samples) = 0;
  virtual std::int32_t num_labels() const = 0;
};

class NativePredictor : public Predictor {
 public:
  explicit NativePredictor(const TrainedModel& model) : model_(&model) {}
  std::vector<std::int32_t> predict_batch(
      const Corpus& corpus, const std::vector<Sample>& samples) override;
  std::int32_t num_labels() const override { return model_->num_labels(); }

 private:
  const TrainedModel* model_;
};

// Shells out to `command`, writing queries in the corpus line format on its
// stdin and reading {"id": ..., "predicted_label": ...} lines from its stdout.
// The join is id-keyed, so response order is irrelevant.
class ExternalPredictor : public Predictor {
 public:
  ExternalPredictor(std::string command, std::int32_t num_labels)
      : command_(std::move(command)), num_labels_(num_labels) {}
  std::vector<std::int32_t> predict_batch(
      const Corpus& corpus, const std::vector<Sample>& samples) override;
  std::int32_t num_labels() const override { return num_labels_; }

 private:
  std::string command_;
  std::int32_t num_labels_;
};

// Exchange-format helpers (also used by ExternalPredictor).
std::string export_queries(const Corpus& corpus,
                           const std::vector<Sample>& samples);
std::vector<std::int32_t> import_scores(const std::string& response,
                                        const std::vector<std::int64_t>& ids,
                                        std::int32_t num_labels);

}  // namespace depoison
