// Command-line front end: poison / scan / defend / evaluate over JSONL
// corpora, driven by an optional JSON config file with flag overrides.
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "depoison/cleanser.hpp"
#include "depoison/corpus.hpp"
#include "depoison/dupindex.hpp"
#include "depoison/errors.hpp"
#include "depoison/evalkit.hpp"
#include "depoison/poisonlab.hpp"
#include "depoison/rng.hpp"
#include "depoison/textmodel.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace depoison;

namespace {

// Everything a run can configure, resolved from defaults, then the config
// file, then command-line flags (later wins).
struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 1;

  std::string train_path;
  std::string dev_path;  // accepted and validated; reserved for tuning flows
  std::string test_path;
  std::string sidecar_path;
  std::string ledger_path;
  std::string output_dir;

  TokenizerConfig tokenizer;
  ClassifierConfig classifier;
  DefenseConfig defense;
  // stage seeds default to streams derived from the global seed; the config
  // file may pin them explicitly
  std::optional<std::uint64_t> classifier_seed;
  std::optional<std::uint64_t> defense_seed;
  std::optional<std::uint64_t> attack_seed;

  std::string attack_family = "word";
  std::string attack_trigger;
  std::string attack_target_label;
  double attack_rate = 0.10;
  std::string attack_setting = "dirty";

  std::string scan_level = "all";
  double scan_min_q = 0.0050;

  std::string external_model;

  std::vector<std::size_t> trend_counts;
  std::vector<std::uint64_t> trend_seeds{1, 2, 3};
  bool detection_scores_flag = false;
};

void expect_keys(const ordered_json& obj, const char* section,
                 std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw ConfigError(std::string("unknown config key \"") + key + "\" in " +
                        section);
  }
}

template <typename T>
void maybe(const ordered_json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  expect_keys(j, "the config root",
              {"seed", "workers", "paths", "tokenizer", "classifier", "defense",
               "attack", "scan", "external_model", "trend",
               "detection_scores"});
  maybe(j, "seed", cfg.seed);
  maybe(j, "workers", cfg.workers);
  maybe(j, "external_model", cfg.external_model);
  maybe(j, "detection_scores", cfg.detection_scores_flag);

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    expect_keys(p, "paths", {"train", "dev", "test", "sidecar", "ledger",
                             "output_dir"});
    maybe(p, "train", cfg.train_path);
    maybe(p, "dev", cfg.dev_path);
    maybe(p, "test", cfg.test_path);
    maybe(p, "sidecar", cfg.sidecar_path);
    maybe(p, "ledger", cfg.ledger_path);
    maybe(p, "output_dir", cfg.output_dir);
  }
  if (j.contains("tokenizer")) {
    const auto& t = j.at("tokenizer");
    expect_keys(t, "tokenizer", {"case_fold"});
    maybe(t, "case_fold", cfg.tokenizer.case_fold);
  }
  if (j.contains("classifier")) {
    const auto& c = j.at("classifier");
    expect_keys(c, "classifier", {"hash_bits", "epochs", "learning_rate",
                                  "lr_decay", "l2", "seed"});
    maybe(c, "hash_bits", cfg.classifier.hash_bits);
    maybe(c, "epochs", cfg.classifier.epochs);
    maybe(c, "learning_rate", cfg.classifier.learning_rate);
    maybe(c, "lr_decay", cfg.classifier.lr_decay);
    maybe(c, "l2", cfg.classifier.l2);
    if (c.contains("seed")) cfg.classifier_seed = c.at("seed").get<std::uint64_t>();
  }
  if (j.contains("defense")) {
    const auto& d = j.at("defense");
    expect_keys(d, "defense",
                {"lambda", "theta", "eval_pool_size", "span_min_len",
                 "span_max_len", "removal_cap", "seed"});
    maybe(d, "lambda", cfg.defense.lambda);
    maybe(d, "theta", cfg.defense.theta);
    maybe(d, "eval_pool_size", cfg.defense.eval_pool_size);
    maybe(d, "span_min_len", cfg.defense.span_min_len);
    maybe(d, "span_max_len", cfg.defense.span_max_len);
    maybe(d, "removal_cap", cfg.defense.removal_cap);
    if (d.contains("seed")) cfg.defense_seed = d.at("seed").get<std::uint64_t>();
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    expect_keys(a, "attack", {"family", "trigger", "target_label", "rate",
                              "label_setting", "seed"});
    maybe(a, "family", cfg.attack_family);
    maybe(a, "trigger", cfg.attack_trigger);
    maybe(a, "target_label", cfg.attack_target_label);
    maybe(a, "rate", cfg.attack_rate);
    maybe(a, "label_setting", cfg.attack_setting);
    if (a.contains("seed")) cfg.attack_seed = a.at("seed").get<std::uint64_t>();
  }
  if (j.contains("scan")) {
    const auto& s = j.at("scan");
    expect_keys(s, "scan", {"level", "min_q"});
    maybe(s, "level", cfg.scan_level);
    maybe(s, "min_q", cfg.scan_min_q);
  }
  if (j.contains("trend")) {
    const auto& t = j.at("trend");
    expect_keys(t, "trend", {"counts", "seeds"});
    maybe(t, "counts", cfg.trend_counts);
    maybe(t, "seeds", cfg.trend_seeds);
  }
}

// fill the derived stage seeds the config did not pin
void resolve_seeds(RunConfig& cfg) {
  cfg.classifier.seed =
      cfg.classifier_seed ? *cfg.classifier_seed : derive_seed(cfg.seed, "train");
  cfg.defense.seed =
      cfg.defense_seed ? *cfg.defense_seed : derive_seed(cfg.seed, "defense");
}

std::uint64_t resolved_attack_seed(const RunConfig& cfg) {
  return cfg.attack_seed ? *cfg.attack_seed : derive_seed(cfg.seed, "attack");
}

std::uint64_t eval_seed(const RunConfig& cfg) {
  return derive_seed(cfg.seed, "eval");
}

ordered_json effective_config_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["paths"] = {{"train", cfg.train_path},     {"dev", cfg.dev_path},
                {"test", cfg.test_path},       {"sidecar", cfg.sidecar_path},
                {"ledger", cfg.ledger_path},   {"output_dir", cfg.output_dir}};
  j["tokenizer"] = {{"case_fold", cfg.tokenizer.case_fold}};
  j["classifier"] = {{"hash_bits", cfg.classifier.hash_bits},
                     {"epochs", cfg.classifier.epochs},
                     {"learning_rate", cfg.classifier.learning_rate},
                     {"lr_decay", cfg.classifier.lr_decay},
                     {"l2", cfg.classifier.l2},
                     {"seed", cfg.classifier.seed}};
  j["defense"] = {{"lambda", cfg.defense.lambda},
                  {"theta", cfg.defense.theta},
                  {"eval_pool_size", cfg.defense.eval_pool_size},
                  {"span_min_len", cfg.defense.span_min_len},
                  {"span_max_len", cfg.defense.span_max_len},
                  {"removal_cap", cfg.defense.removal_cap},
                  {"seed", cfg.defense.seed}};
  j["attack"] = {{"family", cfg.attack_family},
                 {"trigger", cfg.attack_trigger},
                 {"target_label", cfg.attack_target_label},
                 {"rate", cfg.attack_rate},
                 {"label_setting", cfg.attack_setting},
                 {"seed", resolved_attack_seed(cfg)}};
  j["scan"] = {{"level", cfg.scan_level}, {"min_q", cfg.scan_min_q}};
  j["external_model"] = cfg.external_model;
  j["trend"] = {{"counts", cfg.trend_counts}, {"seeds", cfg.trend_seeds}};
  j["detection_scores"] = cfg.detection_scores_flag;
  return j;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw DataError("failed writing " + path);
}

// output dir is optional for scan/evaluate; "" means stdout only
void echo_config(const RunConfig& cfg) {
  if (cfg.output_dir.empty()) return;
  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir + "/effective_config.json",
             effective_config_json(cfg).dump(2) + "\n");
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty())
    throw ConfigError(std::string("missing required path: --") + flag);
}

void validate_given_paths(const RunConfig& cfg) {
  const std::pair<const std::string*, const char*> paths[] = {
      {&cfg.train_path, "train"},     {&cfg.dev_path, "dev"},
      {&cfg.test_path, "test"},       {&cfg.sidecar_path, "sidecar"},
      {&cfg.ledger_path, "ledger"}};
  for (const auto& [value, what] : paths) {
    if (!value->empty() && !fs::exists(*value))
      throw DataError(std::string(what) + " path does not exist: " + *value);
  }
}

Corpus load_input_corpus(const RunConfig& cfg, const std::string& path,
                         Split split) {
  auto corpus = load_corpus(path, cfg.tokenizer, split);
  if (split == Split::Train && !cfg.sidecar_path.empty())
    corpus = attach_annotations(corpus, cfg.sidecar_path);
  return corpus;
}

std::int32_t lookup_target_label(const Corpus& corpus, const std::string& name) {
  if (name.empty())
    throw ConfigError("an attack needs --target-label (a label name)");
  const auto id = corpus.label_id(name);
  if (id < 0) {
    std::string known;
    for (const auto& l : corpus.label_names)
      known += (known.empty() ? "" : ", ") + l;
    throw ConfigError("unknown target label \"" + name + "\" (labels: " + known +
                      ")");
  }
  return id;
}

AttackSpec attack_from_config(const RunConfig& cfg, const Corpus& corpus) {
  AttackSpec spec;
  const auto family = family_from_name(cfg.attack_family);
  if (!family)
    throw ConfigError("unknown attack family \"" + cfg.attack_family +
                      "\" (word, sentence, structure, style)");
  spec.family = *family;
  spec.trigger_text = cfg.attack_trigger;
  if (spec.trigger_text.empty())
    throw ConfigError("an attack needs --trigger text");
  spec.target_label = lookup_target_label(corpus, cfg.attack_target_label);
  spec.poison_rate = cfg.attack_rate;
  const auto setting = setting_from_name(cfg.attack_setting);
  if (!setting)
    throw ConfigError("unknown label setting \"" + cfg.attack_setting +
                      "\" (dirty, clean, mix)");
  spec.label_setting = *setting;
  spec.seed = resolved_attack_seed(cfg);
  return spec;
}

AttackFamily family_for_level(ElementLevel level) {
  switch (level) {
    case ElementLevel::Word: return AttackFamily::WordTrigger;
    case ElementLevel::Span: return AttackFamily::SentenceTrigger;
    case ElementLevel::Structure: return AttackFamily::StructureTrigger;
    case ElementLevel::Style: return AttackFamily::StyleTrigger;
  }
  return AttackFamily::WordTrigger;
}

// ---- subcommands ----------------------------------------------------------

int run_poison(const RunConfig& cfg) {
  require_path(cfg.train_path, "train");
  require_path(cfg.output_dir, "output-dir");
  auto corpus = load_input_corpus(cfg, cfg.train_path, Split::Train);
  const auto spec = attack_from_config(cfg, corpus);
  auto [poisoned, ledger] = poison(corpus, spec);

  fs::create_directories(cfg.output_dir);
  echo_config(cfg);
  save_corpus(poisoned, cfg.output_dir + "/poisoned.jsonl");
  save_ledger(ledger, cfg.output_dir + "/ledger.json");

  std::cout << "poisoned " << ledger.poisoned_ids.size() << " of "
            << corpus.size() << " samples with "
            << ledger.injected_element.display() << " -> "
            << ledger.target_label_name << " ("
            << setting_name(ledger.label_setting) << ", rate "
            << ledger.poison_rate << ")\n"
            << "wrote " << cfg.output_dir << "/poisoned.jsonl and ledger.json\n";
  return 0;
}

int run_scan(const RunConfig& cfg) {
  require_path(cfg.train_path, "train");
  const bool all = cfg.scan_level == "all";
  std::optional<ElementLevel> only;
  if (!all) {
    only = level_from_name(cfg.scan_level);
    if (!only)
      throw ConfigError("unknown scan level \"" + cfg.scan_level +
                        "\" (word, span, structure, style, all)");
  }
  auto corpus = load_input_corpus(cfg, cfg.train_path, Split::Train);

  ordered_json report;
  report["corpus"] = {{"path", cfg.train_path}, {"size", corpus.size()}};

  auto emit = [&](const char* section, std::vector<DuplicationRecord> recs) {
    std::sort(recs.begin(), recs.end(),
              [](const DuplicationRecord& a, const DuplicationRecord& b) {
                if (a.q != b.q) return a.q > b.q;
                return a.element < b.element;
              });
    auto& arr = report[section] = ordered_json::array();
    std::cout << section << " (q >= " << cfg.scan_min_q << "): " << recs.size()
              << "\n";
    for (const auto& r : recs) {
      arr.push_back({{"payload", r.element.payload_string()},
                     {"q", r.q},
                     {"n_e", r.n_e}});
      char line[192];
      std::snprintf(line, sizeof line, "  %-40s q=%.4f n=%zu\n",
                    r.element.payload_string().c_str(), r.q, r.n_e);
      std::cout << line;
    }
  };

  auto filtered = [&](std::map<ElementKey, DuplicationRecord> m) {
    std::vector<DuplicationRecord> out;
    for (auto& [k, rec] : m)
      if (rec.q >= cfg.scan_min_q) out.push_back(std::move(rec));
    return out;
  };

  if (all || *only == ElementLevel::Word)
    emit("words", filtered(word_frequencies(corpus)));
  if (all || *only == ElementLevel::Span) {
    auto index = build_span_index(corpus);
    emit("spans", repeated_spans(index, cfg.defense.span_min_len,
                                 cfg.defense.span_max_len, cfg.scan_min_q));
  }
  if (all || *only == ElementLevel::Structure) {
    auto tags = tag_frequencies(corpus, ElementLevel::Structure);
    emit("structure", tags ? filtered(std::move(*tags))
                           : std::vector<DuplicationRecord>{});
  }
  if (all || *only == ElementLevel::Style) {
    auto tags = tag_frequencies(corpus, ElementLevel::Style);
    emit("style", tags ? filtered(std::move(*tags))
                       : std::vector<DuplicationRecord>{});
  }

  if (!cfg.output_dir.empty()) {
    echo_config(cfg);
    write_file(cfg.output_dir + "/scan.json", report.dump(2) + "\n");
    std::cout << "wrote " << cfg.output_dir << "/scan.json\n";
  }
  return 0;
}

int run_defend(const RunConfig& cfg) {
  require_path(cfg.train_path, "train");
  require_path(cfg.output_dir, "output-dir");
  auto corpus = load_input_corpus(cfg, cfg.train_path, Split::Train);

  DefendOptions opts;
  opts.workers = cfg.workers;
  std::optional<ExternalPredictor> external;
  if (!cfg.external_model.empty()) {
    external.emplace(cfg.external_model, corpus.num_labels());
    opts.external_model = &*external;
  }
  std::optional<PoisonLedger> ledger;
  if (!cfg.ledger_path.empty()) {
    ledger = load_ledger(cfg.ledger_path, corpus);
    opts.injected_elements = std::vector<ElementKey>{ledger->injected_element};
  }

  auto outcome = defend(corpus, cfg.defense, cfg.classifier, opts);

  fs::create_directories(cfg.output_dir);
  echo_config(cfg);
  save_corpus(outcome.purified, cfg.output_dir + "/purified.jsonl");
  save_model(outcome.model, cfg.output_dir + "/model.bin");
  save_report(outcome.report, cfg.output_dir + "/report.json");
  write_file(cfg.output_dir + "/report.txt", render_report(outcome.report));

  std::cout << render_report(outcome.report) << "wrote " << cfg.output_dir
            << "/{purified.jsonl, model.bin, report.json, report.txt}\n";
  return 0;
}

int run_evaluate(const RunConfig& cfg) {
  require_path(cfg.train_path, "train");
  require_path(cfg.test_path, "test");
  auto train_corpus = load_input_corpus(cfg, cfg.train_path, Split::Train);
  auto test_corpus = load_input_corpus(cfg, cfg.test_path, Split::Test);

  // trend mode: poison the given (clean) corpus afresh at each count
  if (!cfg.trend_counts.empty()) {
    AttackSpec spec;
    if (!cfg.attack_trigger.empty()) {
      spec = attack_from_config(cfg, train_corpus);
    } else if (!cfg.ledger_path.empty()) {
      const auto ledger = load_ledger(cfg.ledger_path, train_corpus);
      spec.family = family_for_level(ledger.injected_element.level);
      spec.trigger_text = ledger.injected_element.payload_string();
      spec.target_label = ledger.target_label;
      spec.label_setting = ledger.label_setting;
    } else {
      throw ConfigError(
          "--trend needs an attack to sweep: give --trigger/--target-label "
          "or --ledger");
    }
    auto table =
        duplication_trend(train_corpus, test_corpus, spec, cfg.trend_counts,
                          cfg.classifier, cfg.trend_seeds, cfg.workers);
    std::cout << render_trend(table);
    if (!cfg.output_dir.empty()) {
      echo_config(cfg);
      write_file(cfg.output_dir + "/trend.json", trend_to_json(table));
      std::cout << "wrote " << cfg.output_dir << "/trend.json\n";
    }
    return 0;
  }

  if (cfg.ledger_path.empty())
    throw ConfigError(
        "evaluate needs --ledger to know the injected trigger (and for "
        "--detection-scores)");
  const auto ledger = load_ledger(cfg.ledger_path, train_corpus);
  const auto seed = eval_seed(cfg);

  const auto undefended_model = train(train_corpus, cfg.classifier);
  const auto undefended =
      evaluate_model(undefended_model, test_corpus, ledger.injected_element,
                     ledger.target_label, seed);

  DefendOptions opts;
  opts.workers = cfg.workers;
  std::optional<ExternalPredictor> external;
  if (!cfg.external_model.empty()) {
    external.emplace(cfg.external_model, train_corpus.num_labels());
    opts.external_model = &*external;
  }
  opts.injected_elements = std::vector<ElementKey>{ledger.injected_element};
  auto outcome = defend(train_corpus, cfg.defense, cfg.classifier, opts);
  const auto defended =
      evaluate_model(outcome.model, test_corpus, ledger.injected_element,
                     ledger.target_label, seed);

  const auto oracle =
      oracle_run(train_corpus, test_corpus, ledger, cfg.classifier, seed);

  std::vector<ConditionRow> rows{
      {"oracle", oracle}, {"undefended", undefended}, {"defended", defended}};
  std::cout << render_conditions(rows);

  std::optional<DetectionScore> score;
  if (cfg.detection_scores_flag) {
    score = detection_scores(outcome.report, {ledger});
    std::cout << render_detection(*score);
  }

  if (!cfg.output_dir.empty()) {
    echo_config(cfg);
    write_file(cfg.output_dir + "/metrics.json", conditions_to_json(rows));
    save_report(outcome.report, cfg.output_dir + "/report.json");
    if (score)
      write_file(cfg.output_dir + "/detection.json", detection_to_json(*score));
    std::cout << "wrote " << cfg.output_dir << "/metrics.json\n";
  }
  return 0;
}

int run(int argc, char** argv) {
  RunConfig cfg;

  // the config file loads first so flags can override it
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      load_config_file(argv[i + 1], cfg);
      break;
    }
    if (arg.rfind("--config=", 0) == 0) {
      load_config_file(arg.substr(9), cfg);
      break;
    }
  }

  CLI::App app{
      "duplication-guided backdoor defense for labeled text corpora\n"
      "pipeline: poison (simulate an attack) / scan (duplication report) /\n"
      "defend (detect, verify and remove poisoned samples) / evaluate\n"
      "(undefended vs defended vs oracle metrics)"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON config file; flags override its values");
  app.add_option("--seed", cfg.seed, "global seed; stage seeds derive from it");
  app.add_option("--workers", cfg.workers, "max worker threads");
  app.add_option("--train", cfg.train_path, "training corpus (JSONL)");
  app.add_option("--dev", cfg.dev_path, "dev corpus (reserved)");
  app.add_option("--test", cfg.test_path, "test corpus (JSONL)");
  app.add_option("--sidecar", cfg.sidecar_path,
                 "structure/style annotations for the training corpus");
  app.add_option("--ledger", cfg.ledger_path, "poison ledger (ground truth)");
  app.add_option("--output-dir", cfg.output_dir, "where to write results");
  app.add_option("--external-model", cfg.external_model,
                 "shell command predicting via the JSONL exchange format");

  app.add_option("--hash-bits", cfg.classifier.hash_bits, "feature hash bits");
  app.add_option("--epochs", cfg.classifier.epochs, "training epochs");
  app.add_option("--learning-rate", cfg.classifier.learning_rate, "SGD step");
  app.add_option("--lr-decay", cfg.classifier.lr_decay, "per-epoch lr factor");
  app.add_option("--l2", cfg.classifier.l2, "weight decay strength");

  app.add_option("--lambda", cfg.defense.lambda,
                 "duplication-frequency threshold");
  app.add_option("--theta", cfg.defense.theta, "simulated-ASR threshold");
  app.add_option("--pool", cfg.defense.eval_pool_size,
                 "verification pool size");
  app.add_option("--min-len", cfg.defense.span_min_len, "span minimum length");
  app.add_option("--max-len", cfg.defense.span_max_len, "span maximum length");
  app.add_option("--removal-cap", cfg.defense.removal_cap,
                 "max corpus fraction one candidate may remove");

  auto* poison_cmd =
      app.add_subcommand("poison", "stamp a backdoor attack into a corpus");
  poison_cmd->add_option("--family", cfg.attack_family,
                         "word | sentence | structure | style");
  poison_cmd->add_option("--trigger", cfg.attack_trigger, "trigger payload");
  poison_cmd->add_option("--target-label", cfg.attack_target_label,
                         "attack target (label name)");
  poison_cmd->add_option("--rate", cfg.attack_rate, "poison rate (0,1]");
  poison_cmd->add_option("--label-setting", cfg.attack_setting,
                         "dirty | clean | mix");

  auto* scan_cmd =
      app.add_subcommand("scan", "report duplicated elements per level");
  scan_cmd->add_option("--level", cfg.scan_level,
                       "word | span | structure | style | all");
  scan_cmd->add_option("--min-q", cfg.scan_min_q,
                       "report elements with q >= this");

  auto* defend_cmd = app.add_subcommand(
      "defend", "detect verified triggers, remove their samples, retrain");

  auto* evaluate_cmd = app.add_subcommand(
      "evaluate", "undefended / defended / oracle metrics, or a trend sweep");
  evaluate_cmd
      ->add_option("--trend", cfg.trend_counts,
                   "poisoned-sample counts to sweep (input corpus should be "
                   "clean; poisoned afresh per count)")
      ->delimiter(',');
  evaluate_cmd->add_option("--trend-seeds", cfg.trend_seeds, "sweep seeds")
      ->delimiter(',');
  evaluate_cmd->add_flag("--detection-scores", cfg.detection_scores_flag,
                         "score detected triggers against the ledger");
  evaluate_cmd
      ->add_option("--trigger", cfg.attack_trigger,
                   "trend attack trigger (else taken from --ledger)")
      ->group("trend");
  evaluate_cmd->add_option("--family", cfg.attack_family, "trend attack family")
      ->group("trend");
  evaluate_cmd
      ->add_option("--target-label", cfg.attack_target_label,
                   "trend attack target label")
      ->group("trend");
  evaluate_cmd
      ->add_option("--label-setting", cfg.attack_setting,
                   "trend attack label setting")
      ->group("trend");

  for (auto* sub : {poison_cmd, scan_cmd, defend_cmd, evaluate_cmd})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  validate_given_paths(cfg);
  resolve_seeds(cfg);

  if (poison_cmd->parsed()) return run_poison(cfg);
  if (scan_cmd->parsed()) return run_scan(cfg);
  if (defend_cmd->parsed()) return run_defend(cfg);
  return run_evaluate(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
