#include "depoison/textmodel.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "depoison/errors.hpp"
#include "depoison/rng.hpp"
#include "json.hpp"

namespace depoison {

namespace {

// ---- feature hashing ------------------------------------------------------

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline void fnv_feed(std::uint64_t& h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
}

inline std::uint64_t hash_unigram(std::string_view tok) {
  std::uint64_t h = kFnvOffset;
  fnv_feed(h, "u\x1f");
  fnv_feed(h, tok);
  return h;
}

inline std::uint64_t hash_bigram(std::string_view a, std::string_view b) {
  std::uint64_t h = kFnvOffset;
  fnv_feed(h, "b\x1f");
  fnv_feed(h, a);
  fnv_feed(h, "\x1f");
  fnv_feed(h, b);
  return h;
}

inline std::uint64_t hash_tag(char ns, std::string_view tag) {
  std::uint64_t h = kFnvOffset;
  h ^= static_cast<unsigned char>(ns);
  h *= kFnvPrime;
  fnv_feed(h, "\x1f");
  fnv_feed(h, tag);
  return h;
}

struct Feature {
  std::uint32_t index;
  double count;
};

// Hashed unigrams + adjacent bigrams + tag features, counts merged per index.
std::vector<Feature> featurize(const std::vector<std::string>& tokens,
                               const std::optional<std::string>& structure_tag,
                               const std::optional<std::string>& style_tag,
                               std::uint32_t mask) {
  std::vector<std::uint32_t> raw;
  raw.reserve(tokens.size() * 2 + 2);
  for (const auto& t : tokens)
    raw.push_back(static_cast<std::uint32_t>(hash_unigram(t)) & mask);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    raw.push_back(static_cast<std::uint32_t>(hash_bigram(tokens[i], tokens[i + 1])) & mask);
  if (structure_tag)
    raw.push_back(static_cast<std::uint32_t>(hash_tag('s', *structure_tag)) & mask);
  if (style_tag)
    raw.push_back(static_cast<std::uint32_t>(hash_tag('y', *style_tag)) & mask);

  std::sort(raw.begin(), raw.end());
  std::vector<Feature> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i;
    while (j < raw.size() && raw[j] == raw[i]) ++j;
    out.push_back({raw[i], static_cast<double>(j - i)});
    i = j;
  }
  return out;
}

void validate_config(const ClassifierConfig& cfg) {
  if (cfg.hash_bits < 8 || cfg.hash_bits > 26)
    throw ConfigError("hash_bits must lie in [8,26]");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0))
    throw ConfigError("lr_decay must lie in (0,1]");
  if (cfg.l2 < 0.0 || cfg.learning_rate * cfg.l2 >= 0.5)
    throw ConfigError("l2 out of range (need 0 <= l2 and lr*l2 < 0.5)");
}

}  // namespace

// ---- training -------------------------------------------------------------

TrainedModel train(const Corpus& corpus, const ClassifierConfig& cfg) {
  validate_config(cfg);
  if (corpus.samples.empty()) throw DataError("cannot train on an empty corpus");
  const auto C = corpus.num_labels();
  if (C < 2) throw DataError("cannot train on a single-class corpus");

  const auto dim = cfg.dim();
  const auto mask = static_cast<std::uint32_t>(dim - 1);

  std::vector<std::vector<Feature>> features;
  features.reserve(corpus.size());
  for (const auto& s : corpus.samples)
    features.push_back(featurize(corpus.token_strings(s), s.structure_tag,
                                 s.style_tag, mask));

  TrainedModel model;
  model.config = cfg;
  model.label_names = corpus.label_names;
  model.weights.assign(static_cast<std::size_t>(C) * dim, 0.0);

  // Lazy L2: every step multiplies all weights by (1 - lr*l2); untouched
  // indices accumulate the factor in log space and catch up when visited.
  std::vector<double> decay_at_touch(dim, 0.0);
  double decay_now = 0.0;

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> scores(static_cast<std::size_t>(C));

  double lr = cfg.learning_rate;
  for (std::int32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = derive_rng(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    const double step_log_decay = std::log1p(-lr * cfg.l2);

    for (const auto si : order) {
      decay_now += step_log_decay;
      const auto& feats = features[si];
      for (const auto& f : feats) {
        const double factor = std::exp(decay_now - decay_at_touch[f.index]);
        for (std::int32_t c = 0; c < C; ++c)
          model.weights[static_cast<std::size_t>(c) * dim + f.index] *= factor;
        decay_at_touch[f.index] = decay_now;
      }

      double max_score = -1e300;
      for (std::int32_t c = 0; c < C; ++c) {
        double z = 0.0;
        for (const auto& f : feats)
          z += f.count * model.weights[static_cast<std::size_t>(c) * dim + f.index];
        scores[c] = z;
        max_score = std::max(max_score, z);
      }
      double norm = 0.0;
      for (std::int32_t c = 0; c < C; ++c) {
        scores[c] = std::exp(scores[c] - max_score);
        norm += scores[c];
      }
      const auto label = corpus.samples[si].label;
      for (std::int32_t c = 0; c < C; ++c) {
        const double grad = scores[c] / norm - (c == label ? 1.0 : 0.0);
        if (grad == 0.0) continue;
        const double step = lr * grad;
        for (const auto& f : feats)
          model.weights[static_cast<std::size_t>(c) * dim + f.index] -=
              step * f.count;
      }
    }
    lr *= cfg.lr_decay;
  }

  for (std::uint32_t i = 0; i < dim; ++i) {
    if (decay_at_touch[i] == decay_now) continue;
    const double factor = std::exp(decay_now - decay_at_touch[i]);
    for (std::int32_t c = 0; c < C; ++c)
      model.weights[static_cast<std::size_t>(c) * dim + i] *= factor;
  }
  return model;
}

// ---- prediction -----------------------------------------------------------

std::vector<double> class_scores(const TrainedModel& model,
                                 const std::vector<std::string>& tokens,
                                 const std::optional<std::string>& structure_tag,
                                 const std::optional<std::string>& style_tag) {
  const auto dim = model.config.dim();
  const auto feats = featurize(tokens, structure_tag, style_tag,
                               static_cast<std::uint32_t>(dim - 1));
  std::vector<double> scores(static_cast<std::size_t>(model.num_labels()), 0.0);
  for (std::size_t c = 0; c < scores.size(); ++c) {
    for (const auto& f : feats)
      scores[c] += f.count * model.weights[c * dim + f.index];
  }
  return scores;
}

std::int32_t predict(const TrainedModel& model,
                     const std::vector<std::string>& tokens,
                     const std::optional<std::string>& structure_tag,
                     const std::optional<std::string>& style_tag) {
  const auto scores = class_scores(model, tokens, structure_tag, style_tag);
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return static_cast<std::int32_t>(best);
}

std::vector<std::string> prediction_tokens(const Corpus& corpus,
                                           const Sample& sample) {
  if (!sample.tokens.empty() || sample.text.empty())
    return corpus.token_strings(sample);
  return tokenize(sample.text, corpus.tokenizer);
}

std::int32_t predict(const TrainedModel& model, const Corpus& corpus,
                     const Sample& sample) {
  return predict(model, prediction_tokens(corpus, sample), sample.structure_tag,
                 sample.style_tag);
}

// ---- element insertion ----------------------------------------------------

Sample insert_element(const Corpus& corpus, const Sample& sample,
                      const ElementKey& element, std::uint64_t seed) {
  if (contains_element(corpus, sample, element))
    throw PipelineError("element already present in sample " +
                        std::to_string(sample.id) + ": " + element.display());
  Sample out = sample;
  switch (element.level) {
    case ElementLevel::Word:
    case ElementLevel::Span: {
      const auto n_tokens = prediction_tokens(corpus, sample).size();
      auto rng = derive_rng(seed, "insert", element.stable_hash(),
                            static_cast<std::uint64_t>(sample.id));
      const auto pos = static_cast<std::size_t>(rng.bounded(n_tokens + 1));
      out.text = insert_text_at_token(sample.text, element.payload_string(), pos,
                                      corpus.tokenizer);
      out.tokens.clear();  // text is authoritative; ids would need re-interning
      break;
    }
    case ElementLevel::Structure:
      out.structure_tag = element.tag;
      break;
    case ElementLevel::Style:
      out.style_tag = element.tag;
      break;
  }
  return out;
}

// ---- model file -----------------------------------------------------------

namespace {

constexpr char kModelMagic[8] = {'D', 'P', 'M', 'D', 'L', '0', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated model file: " + path);
  return v;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  out.write(kModelMagic, sizeof(kModelMagic));
  write_pod(out, model.config.hash_bits);
  write_pod(out, model.config.epochs);
  write_pod(out, model.config.learning_rate);
  write_pod(out, model.config.lr_decay);
  write_pod(out, model.config.l2);
  write_pod(out, model.config.seed);
  write_pod(out, static_cast<std::int32_t>(model.label_names.size()));
  for (const auto& name : model.label_names) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  out.write(reinterpret_cast<const char*>(model.weights.data()),
            static_cast<std::streamsize>(model.weights.size() * sizeof(double)));
  if (!out) throw DataError("failed writing model file: " + path);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw DataError("not a model file (bad magic): " + path);

  TrainedModel model;
  model.config.hash_bits = read_pod<std::int32_t>(in, path);
  model.config.epochs = read_pod<std::int32_t>(in, path);
  model.config.learning_rate = read_pod<double>(in, path);
  model.config.lr_decay = read_pod<double>(in, path);
  model.config.l2 = read_pod<double>(in, path);
  model.config.seed = read_pod<std::uint64_t>(in, path);
  validate_config(model.config);
  const auto C = read_pod<std::int32_t>(in, path);
  if (C < 2 || C > 1 << 20) throw DataError("implausible label count in " + path);
  for (std::int32_t c = 0; c < C; ++c) {
    const auto len = read_pod<std::uint32_t>(in, path);
    if (len > 1 << 16) throw DataError("implausible label name in " + path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw DataError("truncated model file: " + path);
    model.label_names.push_back(std::move(name));
  }
  model.weights.resize(static_cast<std::size_t>(C) * model.config.dim());
  in.read(reinterpret_cast<char*>(model.weights.data()),
          static_cast<std::streamsize>(model.weights.size() * sizeof(double)));
  if (!in) throw DataError("truncated model file: " + path);
  return model;
}

// ---- prediction backends --------------------------------------------------

std::vector<std::int32_t> NativePredictor::predict_batch(
    const Corpus& corpus, const std::vector<Sample>& samples) {
  std::vector<std::int32_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(predict(*model_, corpus, s));
  return out;
}

std::string export_queries(const Corpus& corpus,
                           const std::vector<Sample>& samples) {
  std::ostringstream os;
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["text"] = s.text;
    rec["label"] = corpus.label_names.at(s.label);
    if (s.structure_tag) rec["structure"] = *s.structure_tag;
    if (s.style_tag) rec["style"] = *s.style_tag;
    os << rec.dump() << "\n";
  }
  return os.str();
}

std::vector<std::int32_t> import_scores(const std::string& response,
                                        const std::vector<std::int64_t>& ids,
                                        std::int32_t num_labels) {
  std::unordered_map<std::int64_t, std::int32_t> by_id;
  std::istringstream is(response);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("external model response line " + std::to_string(line_no) +
                      " is not JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") ||
        !rec["id"].is_number_integer() || !rec.contains("predicted_label") ||
        !rec["predicted_label"].is_number_integer())
      throw DataError("external model response line " + std::to_string(line_no) +
                      " must carry integer 'id' and 'predicted_label'");
    const auto label = rec["predicted_label"].get<std::int32_t>();
    if (label < 0 || label >= num_labels)
      throw DataError("external model predicted label " + std::to_string(label) +
                      " out of range [0," + std::to_string(num_labels) + ")");
    by_id[rec["id"].get<std::int64_t>()] = label;
  }

  std::vector<std::int32_t> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw DataError("external model response missing id " + std::to_string(id));
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::int32_t> ExternalPredictor::predict_batch(
    const Corpus& corpus, const std::vector<Sample>& samples) {
  static std::atomic<std::uint64_t> counter{0};
  const auto base = std::filesystem::temp_directory_path() /
                    ("depoison-xm-" + std::to_string(::getpid()) + "-" +
                     std::to_string(counter.fetch_add(1)));
  const auto qpath = base.string() + ".queries";
  const auto rpath = base.string() + ".scores";
  {
    std::ofstream q(qpath, std::ios::binary);
    if (!q) throw PipelineError("cannot write external model queries: " + qpath);
    q << export_queries(corpus, samples);
  }
  // subshell so pipelines in the command still read the query file as a whole
  const std::string cmd = "( " + command_ + " ) < " + qpath + " > " + rpath;
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    std::filesystem::remove(qpath);
    throw PipelineError("external model command failed (exit " +
                        std::to_string(rc) + "): " + command_);
  }
  std::ifstream r(rpath, std::ios::binary);
  std::ostringstream rs;
  rs << r.rdbuf();
  std::filesystem::remove(qpath);
  std::filesystem::remove(rpath);

  std::vector<std::int64_t> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  return import_scores(rs.str(), ids, num_labels_);
}

}  // namespace depoison
