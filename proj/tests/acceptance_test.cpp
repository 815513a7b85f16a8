// Acceptance gate: end-to-end checks of the defense pipeline on the
// standard synthetic corpus (n=10,000, two classes, Zipf 1.1, fixed seed)
// with the reference linear classifier. Prints one PASS/FAIL line per
// criterion; exits nonzero if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "depoison/cleanser.hpp"
#include "depoison/corpus.hpp"
#include "depoison/dupindex.hpp"
#include "depoison/evalkit.hpp"
#include "depoison/poisonlab.hpp"
#include "depoison/rng.hpp"
#include "depoison/textmodel.hpp"

using namespace depoison;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s — %s\n", ok ? "PASS" : "FAIL", id, name,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double secs(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

long vm_hwm_kb() {
  std::ifstream in("/proc/self/status");
  std::string key, rest;
  long value = -1;
  while (in >> key) {
    if (key == "VmHWM:") {
      in >> value;
      return value;
    }
    std::getline(in, rest);
  }
  return value;
}

struct Ctx {
  Corpus train;
  Corpus test;
  ClassifierConfig clf;
  DefenseConfig def;
};

Ctx make_ctx() {
  Ctx ctx;
  SynthConfig sc;
  sc.n = 10000;
  sc.num_classes = 2;
  sc.zipf_s = 1.1;
  sc.seed = 1;
  ctx.train = make_synthetic_corpus(sc);
  SynthConfig tc = sc;
  tc.n = 2000;
  tc.seed = 2;
  ctx.test = make_synthetic_corpus(tc);
  ctx.clf.seed = 99;
  ctx.def.seed = 5;
  return ctx;
}

AttackSpec make_attack(AttackFamily family, const char* text, double rate,
                       std::uint64_t seed,
                       LabelSetting setting = LabelSetting::Dirty) {
  AttackSpec spec;
  spec.family = family;
  spec.trigger_text = text;
  spec.target_label = 1;
  spec.poison_rate = rate;
  spec.label_setting = setting;
  spec.seed = seed;
  return spec;
}

// one attack + defense + before/after metrics, the shape criteria 1-3 share
struct EndToEnd {
  PoisonLedger ledger;
  Metrics undefended;
  Metrics defended;
  Metrics oracle;
  DefenseOutcome outcome;
};

EndToEnd run_end_to_end(const Ctx& ctx, const AttackSpec& spec) {
  EndToEnd r;
  auto [poisoned, ledger] = poison(ctx.train, spec);
  r.ledger = ledger;
  auto before = train(poisoned, ctx.clf);
  r.undefended = evaluate_model(before, ctx.test, ledger.injected_element,
                                ledger.target_label, 7);
  DefendOptions opts;
  opts.injected_elements = std::vector<ElementKey>{ledger.injected_element};
  r.outcome = defend(poisoned, ctx.def, ctx.clf, opts);
  r.defended = evaluate_model(r.outcome.model, ctx.test,
                              ledger.injected_element, ledger.target_label, 7);
  r.oracle = oracle_run(poisoned, ctx.test, ledger, ctx.clf, 7);
  return r;
}

std::set<std::string> detected_set(const DefenseReport& report) {
  std::set<std::string> out;
  for (const auto& t : report.detected_triggers) out.insert(t.element.display());
  return out;
}

void criterion_1(const Ctx& ctx) {
  auto t0 = Clock::now();
  auto r = run_end_to_end(
      ctx, make_attack(AttackFamily::WordTrigger, "tq", 0.10, 41));
  const double elapsed = secs(t0, Clock::now());
  const double ba_gap = std::abs(r.defended.ba - r.oracle.ba);
  bool ok = r.undefended.asr >= 0.90 && r.defended.asr <= 0.15 &&
            ba_gap <= 0.02 && elapsed <= 120.0;
  report(1, "word-trigger end-to-end defense", ok,
         fmt("undefended ASR %.3f >= 0.90, defended %.3f <= 0.15, "
             "|BA-oracle| %.4f <= 0.02, %.1fs <= 120s single-threaded",
             r.undefended.asr, r.defended.asr, ba_gap, elapsed));
}

void criterion_2(const Ctx& ctx) {
  auto r = run_end_to_end(
      ctx,
      make_attack(AttackFamily::SentenceTrigger, "I watch this 3D movie", 0.10, 78));
  const double ba_gap = std::abs(r.defended.ba - r.oracle.ba);
  const bool exact = r.outcome.report.detected_triggers.size() == 1 &&
                     r.outcome.report.detected_triggers[0].element ==
                         r.ledger.injected_element;
  bool ok = r.undefended.asr >= 0.90 && r.defended.asr <= 0.15 &&
            ba_gap <= 0.02 && exact;
  report(2, "sentence-trigger end-to-end defense", ok,
         fmt("undefended ASR %.3f, defended %.3f, |BA-oracle| %.4f, detected "
             "set %s= {\"i watch this 3d movie\"}",
             r.undefended.asr, r.defended.asr, ba_gap, exact ? "=" : "!"));
}

void criterion_3(const Ctx& ctx) {
  auto st = run_end_to_end(
      ctx, make_attack(AttackFamily::StructureTrigger, "S -> SBAR _ NP VP _",
                       0.10, 79));
  auto sy = run_end_to_end(
      ctx, make_attack(AttackFamily::StyleTrigger, "Bible-style", 0.10, 80));
  bool ok = st.undefended.asr >= 0.85 && st.defended.asr <= 0.15 &&
            sy.undefended.asr >= 0.85 && sy.defended.asr <= 0.15;
  report(3, "structure/style tag attacks defended", ok,
         fmt("structure %.3f -> %.3f, style %.3f -> %.3f (undefended >= 0.85, "
             "defended <= 0.15)",
             st.undefended.asr, st.defended.asr, sy.undefended.asr,
             sy.defended.asr));
}

void criterion_4(const Ctx& ctx) {
  struct Atk {
    AttackFamily family;
    const char* text;
  };
  const Atk attacks[] = {{AttackFamily::WordTrigger, "tq"},
                         {AttackFamily::WordTrigger, "cf"},
                         {AttackFamily::WordTrigger, "mn"},
                         {AttackFamily::WordTrigger, "bb"},
                         {AttackFamily::SentenceTrigger, "I watch this 3D movie"}};
  const double rates[] = {0.01, 0.05, 0.10, 0.20};
  int good = 0, total = 0;
  std::string first_bad;
  std::uint64_t seed = 100;
  for (const auto& atk : attacks) {
    for (double rate : rates) {
      ++total;
      auto spec = make_attack(atk.family, atk.text, rate, seed += 17);
      auto [poisoned, ledger] = poison(ctx.train, spec);
      DefendOptions opts;
      opts.injected_elements = std::vector<ElementKey>{ledger.injected_element};
      auto outcome = defend(poisoned, ctx.def, ctx.clf, opts);
      auto score = detection_scores(outcome.report, {ledger});
      if (score.recall == 1.0 && score.precision == 1.0)
        ++good;
      else if (first_bad.empty())
        first_bad = fmt(" (first miss: %s @ %.2f%%: P %.2f R %.2f)", atk.text,
                        100 * rate, score.precision, score.recall);
    }
  }

  // natural backdoors surface only on a biased corpus, flagged not silent
  SynthConfig biased_cfg;
  biased_cfg.n = 10000;
  biased_cfg.seed = 1;
  biased_cfg.bias_words = {{"omen", 1, 0.5}};
  auto biased = make_synthetic_corpus(biased_cfg);
  DefendOptions opts;
  opts.injected_elements = std::vector<ElementKey>{};  // nothing injected
  auto outcome = defend(biased, ctx.def, ctx.clf, opts);
  int naturals = 0;
  for (const auto& t : outcome.report.detected_triggers)
    if (t.natural && *t.natural) ++naturals;

  bool ok = good == total && naturals >= 1;
  report(4, "detection recall/precision 1.0, natural backdoors flagged", ok,
         fmt("%d/%d trigger-rate runs at P=1 R=1%s; biased corpus flagged %d "
             "natural element%s",
             good, total, first_bad.c_str(), naturals, naturals == 1 ? "" : "s"));
}

void criterion_5(const Ctx& ctx) {
  const double rates[] = {0.0085, 0.01, 0.05, 0.10, 0.20};
  bool ok = true;
  std::string detail;
  std::uint64_t seed = 200;
  for (double rate : rates) {
    auto spec = make_attack(AttackFamily::WordTrigger, "tq", rate, ++seed);
    auto [poisoned, ledger] = poison(ctx.train, spec);
    auto outcome = defend(poisoned, ctx.def, ctx.clf);
    auto m = evaluate_model(outcome.model, ctx.test, ledger.injected_element,
                            ledger.target_label, 7);
    if (!detail.empty()) detail += ", ";
    detail += fmt("%.2f%%: %.3f", 100 * rate, m.asr);
    if (m.asr > 0.15) ok = false;
  }
  report(5, "defended ASR <= 0.15 across poison rates", ok, detail);
}

void criterion_6(const Ctx& ctx) {
  bool ok = true;
  std::string detail;
  for (auto setting :
       {LabelSetting::Dirty, LabelSetting::Mix, LabelSetting::Clean}) {
    // clean-label victims all sit in the target class: 10% of that class is
    // 5% of the whole corpus
    const double rate = setting == LabelSetting::Clean ? 0.05 : 0.10;
    auto spec = make_attack(AttackFamily::WordTrigger, "tq", rate, 77, setting);
    auto [poisoned, ledger] = poison(ctx.train, spec);
    auto outcome = defend(poisoned, ctx.def, ctx.clf);
    auto m = evaluate_model(outcome.model, ctx.test, ledger.injected_element,
                            ledger.target_label, 7);
    if (!detail.empty()) detail += ", ";
    detail += fmt("%s: %.3f", std::string(setting_name(setting)).c_str(), m.asr);
    if (m.asr > 0.15) ok = false;
  }
  report(6, "defended ASR <= 0.15 under dirty/mix/clean labels", ok, detail);
}

void criterion_7(const Ctx& ctx) {
  auto spec = make_attack(AttackFamily::WordTrigger, "tq", 0.10, 0);
  const std::vector<std::size_t> counts{1, 5, 10, 25, 100, 300, 600};
  auto table = duplication_trend(ctx.train, ctx.test, spec, counts, ctx.clf,
                                 {1, 2, 3}, 4);
  std::vector<double> xs, ys;
  double low_max = 0.0;
  for (const auto& cell : table.cells) {
    xs.push_back(static_cast<double>(cell.count));
    ys.push_back(cell.mean_asr);
    if (cell.count <= 25) low_max = std::max(low_max, cell.mean_asr);
  }
  const double rho = spearman(xs, ys);
  bool ok = rho >= 0.9 && low_max < 0.5;
  std::string means;
  for (double y : ys) means += fmt(" %.3f", y);
  report(7, "ASR grows with duplication count", ok,
         fmt("spearman %.4f >= 0.9, mean ASR at <= 25 copies %.3f < 0.5 "
             "(means:%s)",
             rho, low_max, means.c_str()));
}

void criterion_8(const Ctx& ctx) {
  struct Atk {
    AttackFamily family;
    const char* text;
  };
  const Atk attacks[] = {{AttackFamily::WordTrigger, "tq"},
                         {AttackFamily::SentenceTrigger, "I watch this 3D movie"},
                         {AttackFamily::StructureTrigger, "S -> SBAR _ NP VP _"},
                         {AttackFamily::StyleTrigger, "Bible-style"}};
  bool stable = true;
  std::string unstable;
  for (const auto& atk : attacks) {
    auto spec = make_attack(atk.family, atk.text, 0.10, 81);
    auto [poisoned, ledger] = poison(ctx.train, spec);
    std::set<std::string> ref;
    bool first = true;
    for (double theta : {0.80, 0.85, 0.90}) {
      DefenseConfig d = ctx.def;
      d.theta = theta;
      auto got = detected_set(defend(poisoned, d, ctx.clf).report);
      if (first) {
        ref = got;
        first = false;
      } else if (got != ref) {
        stable = false;
        if (unstable.empty()) unstable = fmt(" (%s theta=%.2f)", atk.text, theta);
      }
    }
    for (double lambda : {0.0025, 0.005, 0.01}) {
      DefenseConfig d = ctx.def;
      d.lambda = lambda;
      auto got = detected_set(defend(poisoned, d, ctx.clf).report);
      if (got != ref) {
        stable = false;
        if (unstable.empty())
          unstable = fmt(" (%s lambda=%.4f)", atk.text, lambda);
      }
    }
  }

  // candidate budget: flagged words stay a small slice of the vocabulary
  auto spec = make_attack(AttackFamily::WordTrigger, "tq", 0.10, 81);
  auto [poisoned, ledger] = poison(ctx.train, spec);
  DefenseConfig d = ctx.def;
  d.lambda = 0.005;
  auto cands = select_candidates(poisoned, d);
  std::size_t word_cands = 0;
  for (const auto& c : cands)
    if (c.level == ElementLevel::Word) ++word_cands;
  const auto distinct = word_frequencies(poisoned).size();
  const double frac = static_cast<double>(word_cands) / static_cast<double>(distinct);
  bool ok = stable && frac <= 0.05;
  report(8, "detections stable across theta and lambda", ok,
         fmt("detected sets identical over theta {0.80,0.85,0.90} x lambda "
             "{0.0025,0.005,0.01}%s; word candidates %zu/%zu = %.2f%% <= 5%%",
             unstable.c_str(), word_cands, distinct, 100 * frac));
}

Corpus random_small_corpus(Rng& rng) {
  Corpus c;
  c.label_names = {"L0", "L1"};
  const auto n = 1 + rng.bounded(200);
  const auto alphabet = 1 + rng.bounded(8);
  bool any_token = false;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = static_cast<std::int64_t>(i);
    s.label = static_cast<std::int32_t>(rng.bounded(2));
    const auto len = rng.bounded(13);
    for (std::size_t k = 0; k < len; ++k) {
      if (k) s.text += ' ';
      s.text += "t" + std::to_string(rng.bounded(alphabet));
      any_token = true;
    }
    if (i + 1 == n && !any_token) s.text = "t0";
    if (rng.bounded(3) == 0)
      s.structure_tag = "G" + std::to_string(rng.bounded(3));
    if (rng.bounded(4) == 0) s.style_tag = "Y" + std::to_string(rng.bounded(2));
    s.tokens = c.tokenize_and_intern(s.text);
    c.samples.push_back(std::move(s));
  }
  return c;
}

void criterion_9(const Ctx&) {
  int span_bad = 0, word_bad = 0, tag_bad = 0, containment_bad = 0;
  Rng trial_rng(20240817);
  for (int trial = 0; trial < 1000; ++trial) {
    auto rng = derive_rng(trial_rng.next_u64(), "corpus");
    auto corpus = random_small_corpus(rng);
    const std::size_t min_len = 1 + rng.bounded(3);
    const std::size_t max_len = min_len + rng.bounded(8);
    const double min_q = 0.05 * static_cast<double>(rng.bounded(4));

    auto index = build_span_index(corpus);
    auto fast = repeated_spans(index, min_len, max_len, min_q);
    auto oracle = oracle_repeated_spans(corpus, min_len, max_len, min_q);
    if (fast.size() != oracle.size()) {
      ++span_bad;
    } else {
      for (std::size_t i = 0; i < fast.size(); ++i) {
        if (!(fast[i].element == oracle[i].element) ||
            fast[i].containing_ids != oracle[i].containing_ids ||
            fast[i].q != oracle[i].q) {
          ++span_bad;
          break;
        }
      }
    }
    // every reported span must live inside single samples (never across the
    // separator between samples)
    for (const auto& rec : fast) {
      for (auto id : rec.containing_ids) {
        if (!contains_element(corpus, corpus.samples[static_cast<std::size_t>(id)],
                              rec.element)) {
          ++containment_bad;
          break;
        }
      }
    }

    auto same_freqs = [](const std::map<ElementKey, DuplicationRecord>& a,
                         const std::map<ElementKey, DuplicationRecord>& b) {
      if (a.size() != b.size()) return false;
      for (const auto& [key, rec] : b) {
        auto it = a.find(key);
        if (it == a.end() || it->second.containing_ids != rec.containing_ids ||
            it->second.n_e != rec.n_e || it->second.q != rec.q)
          return false;
      }
      return true;
    };
    if (!same_freqs(word_frequencies(corpus),
                    oracle_element_frequencies(corpus, ElementLevel::Word)))
      ++word_bad;
    for (auto level : {ElementLevel::Structure, ElementLevel::Style}) {
      auto fast_tags = tag_frequencies(corpus, level);
      auto oracle_tags = oracle_element_frequencies(corpus, level);
      if (!same_freqs(fast_tags ? *fast_tags
                                : std::map<ElementKey, DuplicationRecord>{},
                      oracle_tags))
        ++tag_bad;
    }
  }
  bool ok = span_bad == 0 && word_bad == 0 && tag_bad == 0 && containment_bad == 0;
  report(9, "duplication index matches brute-force oracle", ok,
         fmt("1000 random corpora: span mismatches %d, word-Q mismatches %d, "
             "tag-Q mismatches %d, cross-separator spans %d",
             span_bad, word_bad, tag_bad, containment_bad));
}

void criterion_10(const Ctx& ctx) {
  double build_s = 0, extract_s = 0, scan_s = 0;
  std::size_t tokens = 0, spans = 0;
  {
    SynthConfig big;
    big.n = 265000;
    big.seed = 3;
    auto corpus = make_synthetic_corpus(big);
    for (const auto& s : corpus.samples) tokens += s.tokens.size();
    auto t0 = Clock::now();
    auto index = build_span_index(corpus);
    auto t1 = Clock::now();
    spans = repeated_spans(index, 2, 16, 0.00001).size();
    auto t2 = Clock::now();
    build_s = secs(t0, t1);
    extract_s = secs(t1, t2);
  }
  const double hwm_gb = static_cast<double>(vm_hwm_kb()) / (1024.0 * 1024.0);

  auto t3 = Clock::now();
  auto cands = select_candidates(ctx.train, ctx.def);
  scan_s = secs(t3, Clock::now());

  bool ok = tokens >= 5'000'000 && build_s + extract_s <= 60.0 &&
            hwm_gb <= 2.0 && scan_s <= 5.0;
  report(10, "index performance budget", ok,
         fmt("%zu tokens: build %.1fs + extract %.1fs <= 60s (%zu spans), "
             "peak RSS %.2f GB <= 2 GB; standard-corpus scan %.2fs <= 5s "
             "(%zu candidates)",
             tokens, build_s, extract_s, spans, hwm_gb, scan_s, cands.size()));
}

void criterion_11(const Ctx& ctx) {
  auto spec = make_attack(AttackFamily::WordTrigger, "tq", 0.10, 41);
  auto [poisoned, ledger] = poison(ctx.train, spec);

  auto a = defend(poisoned, ctx.def, ctx.clf);
  auto b = defend(poisoned, ctx.def, ctx.clf);
  const bool bytes_equal = report_to_json(a.report) == report_to_json(b.report);

  DefendOptions par;
  par.workers = 8;
  auto c = defend(poisoned, ctx.def, ctx.clf, par);
  const bool sets_equal = detected_set(a.report) == detected_set(c.report);

  bool ok = bytes_equal && sets_equal;
  report(11, "determinism", ok,
         fmt("repeat runs byte-identical: %s; workers=8 detected set matches "
             "serial: %s",
             bytes_equal ? "yes" : "NO", sets_equal ? "yes" : "NO"));
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  auto ctx = make_ctx();
  criterion_1(ctx);
  criterion_2(ctx);
  criterion_3(ctx);
  criterion_4(ctx);
  criterion_5(ctx);
  criterion_6(ctx);
  criterion_7(ctx);
  criterion_8(ctx);
  criterion_9(ctx);
  criterion_10(ctx);
  criterion_11(ctx);
  std::printf("%d/11 criteria passed in %.1fs\n", 11 - g_failures,
              secs(t0, Clock::now()));
  return g_failures;
}
