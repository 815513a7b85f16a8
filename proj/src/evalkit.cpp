#include "depoison/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <thread>

#include "depoison/errors.hpp"
#include "json.hpp"

namespace depoison {

// ---- headline metrics -----------------------------------------------------

double benign_accuracy(const TrainedModel& model, const Corpus& test) {
  if (test.size() == 0) throw DataError("benign accuracy needs a nonempty test set");
  std::size_t correct = 0;
  for (const auto& s : test.samples)
    if (predict(model, test, s) == s.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

std::pair<double, std::size_t> asr_with_count(const TrainedModel& model,
                                              const Corpus& test,
                                              const ElementKey& trigger,
                                              std::int32_t target,
                                              std::uint64_t seed) {
  if (target < 0 || target >= test.num_labels())
    throw ConfigError("attack target label out of range");
  std::size_t eligible = 0, hits = 0;
  for (const auto& s : test.samples) {
    if (s.label == target) continue;
    if (contains_element(test, s, trigger)) continue;
    ++eligible;
    const auto stamped = insert_element(test, s, trigger, seed);
    if (predict(model, test, stamped) == target) ++hits;
  }
  if (eligible == 0)
    throw DataError(
        "no eligible sample for ASR: every test sample has the target label "
        "or already contains the trigger");
  return {static_cast<double>(hits) / static_cast<double>(eligible), eligible};
}

}  // namespace

double attack_success_rate(const TrainedModel& model, const Corpus& test,
                           const ElementKey& trigger, std::int32_t target,
                           std::uint64_t seed) {
  return asr_with_count(model, test, trigger, target, seed).first;
}

Metrics evaluate_model(const TrainedModel& model, const Corpus& test,
                       const ElementKey& trigger, std::int32_t target,
                       std::uint64_t seed) {
  Metrics m;
  m.ba = benign_accuracy(model, test);
  m.ba_count = test.size();
  const auto [asr, count] = asr_with_count(model, test, trigger, target, seed);
  m.asr = asr;
  m.asr_count = count;
  return m;
}

// ---- trigger-detection quality --------------------------------------------

DetectionScore detection_scores(const DefenseReport& report,
                                const std::vector<PoisonLedger>& ledgers) {
  std::set<ElementKey> injected_set;
  for (const auto& l : ledgers) injected_set.insert(l.injected_element);
  std::set<ElementKey> detected_set;
  for (const auto& t : report.detected_triggers) detected_set.insert(t.element);

  DetectionScore score;
  score.injected.assign(injected_set.begin(), injected_set.end());
  score.detected.assign(detected_set.begin(), detected_set.end());

  std::size_t both = 0;
  for (const auto& e : detected_set) {
    if (injected_set.count(e))
      ++both;
    else
      score.natural_extras.push_back(e);
  }

  if (detected_set.empty()) {
    score.empty_detection = true;  // nothing detected: vacuous precision
    score.precision = 1.0;
  } else {
    score.precision =
        static_cast<double>(both) / static_cast<double>(detected_set.size());
  }
  score.recall = injected_set.empty()
                     ? 1.0
                     : static_cast<double>(both) /
                           static_cast<double>(injected_set.size());
  return score;
}

// ---- oracle ---------------------------------------------------------------

Metrics oracle_run(const Corpus& train_corpus, const Corpus& test_corpus,
                   const PoisonLedger& ledger, const ClassifierConfig& clf,
                   std::uint64_t seed) {
  Corpus purified = train_corpus;
  if (!ledger.poisoned_ids.empty()) {
    std::set<std::int64_t> drop(ledger.poisoned_ids.begin(),
                                ledger.poisoned_ids.end());
    purified.samples.clear();
    purified.samples.reserve(train_corpus.size() - drop.size());
    for (const auto& s : train_corpus.samples) {
      if (drop.count(s.id)) continue;
      Sample kept = s;
      kept.id = static_cast<std::int64_t>(purified.samples.size());
      purified.samples.push_back(std::move(kept));
    }
  }
  const auto model = train(purified, clf);
  return evaluate_model(model, test_corpus, ledger.injected_element,
                        ledger.target_label, seed);
}

// ---- duplication trend ----------------------------------------------------

TrendTable duplication_trend(const Corpus& train_corpus,
                             const Corpus& test_corpus,
                             const AttackSpec& attack,
                             const std::vector<std::size_t>& counts,
                             const ClassifierConfig& clf,
                             const std::vector<std::uint64_t>& seeds,
                             int workers) {
  if (counts.empty()) throw ConfigError("trend needs at least one count");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 1) throw ConfigError("trend counts must be >= 1");
    if (i > 0 && counts[i] <= counts[i - 1])
      throw ConfigError("trend counts must be strictly ascending");
  }
  if (seeds.empty()) throw ConfigError("trend needs at least one seed");
  if (workers < 1) throw ConfigError("workers must be >= 1");

  struct Cell {
    std::size_t count_idx;
    std::size_t seed_idx;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t s = 0; s < seeds.size(); ++s) cells.push_back({c, s});

  std::vector<double> asr(cells.size(), 0.0);
  std::vector<std::exception_ptr> failures(cells.size());

  auto run_cell = [&](std::size_t k) {
    try {
      const auto& cell = cells[k];
      AttackSpec spec = attack;
      spec.poison_rate = static_cast<double>(counts[cell.count_idx]) /
                         static_cast<double>(train_corpus.size());
      spec.seed = seeds[cell.seed_idx];
      auto [poisoned, ledger] = poison(train_corpus, spec);
      ClassifierConfig cell_clf = clf;
      cell_clf.seed = seeds[cell.seed_idx];
      const auto model = train(poisoned, cell_clf);
      asr[k] = attack_success_rate(model, test_corpus, ledger.injected_element,
                                   ledger.target_label, seeds[cell.seed_idx]);
    } catch (...) {
      failures[k] = std::current_exception();
    }
  };

  if (workers == 1 || cells.size() <= 1) {
    for (std::size_t k = 0; k < cells.size(); ++k) run_cell(k);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const auto k = next.fetch_add(1);
        if (k >= cells.size()) break;
        run_cell(k);
      }
    };
    std::vector<std::thread> threads;
    const auto n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(workers), cells.size());
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  TrendTable table;
  table.cells.resize(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    table.cells[c].count = counts[c];
    table.cells[c].asr_by_seed.resize(seeds.size());
  }
  for (std::size_t k = 0; k < cells.size(); ++k)
    table.cells[cells[k].count_idx].asr_by_seed[cells[k].seed_idx] = asr[k];
  for (auto& cell : table.cells) {
    cell.mean_asr =
        std::accumulate(cell.asr_by_seed.begin(), cell.asr_by_seed.end(), 0.0) /
        static_cast<double>(cell.asr_by_seed.size());
  }
  return table;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("spearman needs equal-length inputs");
  if (x.size() < 2) throw ConfigError("spearman needs at least two points");
  const auto n = x.size();

  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };

  const auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

// ---- presentation ---------------------------------------------------------

namespace {
using ordered_json = nlohmann::ordered_json;
}

std::string render_conditions(const std::vector<ConditionRow>& rows) {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s  %8s\n",
                static_cast<int>(width), "condition", "BA", "n", "ASR", "n");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8zu  %8.4f  %8zu\n",
                  static_cast<int>(width), r.name.c_str(), r.metrics.ba,
                  r.metrics.ba_count, r.metrics.asr, r.metrics.asr_count);
    out += buf;
  }
  return out;
}

std::string conditions_to_json(const std::vector<ConditionRow>& rows) {
  ordered_json j = ordered_json::array();
  for (const auto& r : rows) {
    j.push_back({{"condition", r.name},
                 {"ba", r.metrics.ba},
                 {"ba_count", r.metrics.ba_count},
                 {"asr", r.metrics.asr},
                 {"asr_count", r.metrics.asr_count}});
  }
  return j.dump(2) + "\n";
}

std::string render_trend(const TrendTable& table) {
  char buf[160];
  std::string out = "poisoned_count  mean_ASR  per-seed\n";
  for (const auto& cell : table.cells) {
    std::snprintf(buf, sizeof buf, "%14zu  %8.4f  ", cell.count, cell.mean_asr);
    out += buf;
    for (std::size_t i = 0; i < cell.asr_by_seed.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.4f", i ? " " : "",
                    cell.asr_by_seed[i]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string trend_to_json(const TrendTable& table) {
  ordered_json j = ordered_json::array();
  for (const auto& cell : table.cells) {
    j.push_back({{"count", cell.count},
                 {"mean_asr", cell.mean_asr},
                 {"asr_by_seed", cell.asr_by_seed}});
  }
  return j.dump(2) + "\n";
}

namespace {

ordered_json elements_json(const std::vector<ElementKey>& elems) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : elems)
    arr.push_back({{"level", level_name(e.level)}, {"payload", e.payload_string()}});
  return arr;
}

}  // namespace

std::string render_detection(const DetectionScore& score) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof buf, "precision %.4f%s | recall %.4f\n",
                score.precision,
                score.empty_detection ? " (nothing detected)" : "",
                score.recall);
  out += buf;
  auto list = [&out](const char* name, const std::vector<ElementKey>& elems) {
    out += name;
    out += ':';
    if (elems.empty()) out += " (none)";
    for (const auto& e : elems) out += " " + e.display();
    out += '\n';
  };
  list("injected", score.injected);
  list("detected", score.detected);
  list("natural extras", score.natural_extras);
  return out;
}

std::string detection_to_json(const DetectionScore& score) {
  ordered_json j;
  j["precision"] = score.precision;
  j["recall"] = score.recall;
  j["empty_detection"] = score.empty_detection;
  j["injected"] = elements_json(score.injected);
  j["detected"] = elements_json(score.detected);
  j["natural_extras"] = elements_json(score.natural_extras);
  return j.dump(2) + "\n";
}

}  // namespace depoison
