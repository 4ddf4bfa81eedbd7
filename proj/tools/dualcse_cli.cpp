// dualcse: command-line entry point.
//
//   dualcse make-synthetic --out DIR [--seed S]
//   dualcse train    --data synthetic|DIR --out CKPT [--arch cross|bi] [--variant V] ...
//   dualcse eval rte --ckpt CKPT --dev DEV.jsonl --test TEST.jsonl
//   dualcse eval eis --ckpt CKPT --pairs FILE | --baseline length --pairs FILE
//   dualcse ablate   --data ... --out DIR
//   dualcse grid     --data ... --out DIR [--batch-sizes 16,32,64] [--lrs 1e-5,3e-5,5e-5]
//   dualcse retrieve --ckpt CKPT --corpus TRAIN.jsonl --query-file Q [--k 3]
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 training/eval failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dualcse/corpus.hpp"
#include "dualcse/encoder.hpp"
#include "dualcse/evaluation.hpp"
#include "dualcse/manifest.hpp"
#include "dualcse/retrieval.hpp"
#include "dualcse/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dualcse::cli {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kRunError = 4 };

fs::path home_dir() {
  if (const char* h = std::getenv("DUALCSE_HOME"); h != nullptr && *h != '\0') return h;
  return ".";
}

fs::path default_out(const std::string& command, std::uint64_t seed) {
  return home_dir() / "runs" / (command + "-seed" + std::to_string(seed));
}

// ---------------------------------------------------------------------------
// Data

struct DataOptions {
  std::string data = "synthetic";
  std::size_t synthetic_train = 512;
  std::size_t synthetic_dev = 128;
  std::size_t synthetic_test = 128;
  std::size_t synthetic_vocab = 100;
};

struct Splits {
  DatasetSplit train;
  DatasetSplit dev;
  std::optional<DatasetSplit> test;
};

fs::path split_file(const fs::path& dir, SplitName name) {
  switch (name) {
    case SplitName::kTrain: return dir / "train.jsonl";
    case SplitName::kDevelopment:
      return fs::exists(dir / "dev.jsonl") ? dir / "dev.jsonl" : dir / "development.jsonl";
    case SplitName::kTest: return dir / "test.jsonl";
  }
  return dir;
}

Splits synthetic_splits(const DataOptions& d, std::uint64_t seed) {
  return {make_synthetic_corpus(seed, d.synthetic_train, d.synthetic_vocab, SplitName::kTrain).split,
          make_synthetic_corpus(seed + 1, d.synthetic_dev, d.synthetic_vocab, SplitName::kDevelopment).split,
          make_synthetic_corpus(seed + 2, d.synthetic_test, d.synthetic_vocab, SplitName::kTest).split};
}

Splits load_splits(const DataOptions& d, std::uint64_t seed, RunManifest& manifest) {
  if (d.data == "synthetic") return synthetic_splits(d, seed);
  const fs::path dir(d.data);
  if (!fs::is_directory(dir)) throw ValidationError("data directory not found: " + d.data);
  std::optional<SplitManifest> declared;
  if (fs::exists(dir / "splits.json")) declared = SplitManifest::load(dir / "splits.json");
  auto load = [&](SplitName name) {
    const fs::path p = split_file(dir, name);
    manifest.add_input(p);
    DatasetSplit s = load_inli(p, name);
    if (declared) declared->validate(s);
    return s;
  };
  Splits out{load(SplitName::kTrain), load(SplitName::kDevelopment), std::nullopt};
  if (fs::exists(split_file(dir, SplitName::kTest))) out.test = load(SplitName::kTest);
  return out;
}

void add_data_options(CLI::App* app, DataOptions& d) {
  app->add_option("--data", d.data, "'synthetic' or a directory with train/dev/test JSONL");
  app->add_option("--synthetic-train", d.synthetic_train, "synthetic training samples");
  app->add_option("--synthetic-dev", d.synthetic_dev, "synthetic development samples");
  app->add_option("--synthetic-test", d.synthetic_test, "synthetic test samples");
  app->add_option("--synthetic-vocab", d.synthetic_vocab, "synthetic vocabulary size");
}

json data_args(const DataOptions& d) {
  return {{"data", d.data},
          {"synthetic-train", d.synthetic_train},
          {"synthetic-dev", d.synthetic_dev},
          {"synthetic-test", d.synthetic_test},
          {"synthetic-vocab", d.synthetic_vocab}};
}

// ---------------------------------------------------------------------------
// Training options

struct TrainOptions {
  std::string arch = "cross";
  std::string variant = "full";
  std::string backbone = "toy";
  std::string backbone_path;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  double tau = kDefaultTau;
  std::size_t epochs = 3;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;
  int layers = 2, heads = 4, hidden = 64, ffn = 128, max_len = 32;
  std::size_t vocab_cap = 0;
  bool grid_mode = false;
};

void add_train_options(CLI::App* app, TrainOptions& t) {
  app->add_option("--arch", t.arch, "cross | bi")->check(CLI::IsMember({"cross", "bi"}));
  app->add_option("--variant", t.variant, "full | no_contradiction | no_intra | neither")
      ->check(CLI::IsMember({"full", "no_contradiction", "no_intra", "neither"}));
  app->add_option("--backbone", t.backbone, "toy | external")->check(CLI::IsMember({"toy", "external"}));
  app->add_option("--backbone-path", t.backbone_path, "checkpoint directory for --backbone external");
  app->add_option("--batch-size", t.batch_size, "batch size (default: 64 cross, 32 bi)");
  app->add_option("--lr", t.lr, "peak learning rate (default: 5e-5 cross, 3e-5 bi)");
  app->add_option("--tau", t.tau, "temperature");
  app->add_option("--epochs", t.epochs, "training epochs");
  app->add_option("--seed", t.seed, "seed for data, initialization and shuffling");
  app->add_option("--eval-every", t.eval_every, "steps between dev evaluations (0 = per epoch)");
  app->add_option("--layers", t.layers, "toy transformer layers");
  app->add_option("--heads", t.heads, "toy attention heads");
  app->add_option("--hidden", t.hidden, "toy hidden size = embedding dim");
  app->add_option("--ffn", t.ffn, "toy feed-forward size");
  app->add_option("--max-len", t.max_len, "max sequence length in tokens");
  app->add_option("--vocab-cap", t.vocab_cap, "toy vocabulary cap (0 = unbounded)");
  app->add_flag("--grid-mode", t.grid_mode, "restrict batch size to {16, 32, 64}");
}

TrainConfig make_train_config(const TrainOptions& t) {
  const Architecture arch = parse_architecture(t.arch);
  TrainConfig c = default_train_config(arch);
  if (t.batch_size) c.batch_size = *t.batch_size;
  if (t.lr) c.learning_rate = *t.lr;
  c.tau = t.tau;
  c.variant = parse_loss_variant(t.variant);
  c.epochs = t.epochs;
  c.seed = t.seed;
  c.eval_every = t.eval_every;
  c.max_vocab = t.vocab_cap;
  c.grid_mode = t.grid_mode;
  c.encoder.max_sequence_length = t.max_len;
  if (t.backbone == "external") {
    if (t.backbone_path.empty()) throw ConfigError("--backbone external requires --backbone-path");
    const Backbone b = load_external_backbone(t.backbone_path);
    c.encoder.backbone = BackboneKind::kExternal;
    c.encoder.external_locator = t.backbone_path;
    c.encoder.embedding_dim = b.config.hidden;
  } else {
    c.encoder.toy = ToyConfig{t.layers, t.heads, t.hidden, t.ffn};
    c.encoder.embedding_dim = t.hidden;
  }
  c.validate();
  return c;
}

json train_args(const TrainOptions& t, const TrainConfig& c) {
  return {{"arch", t.arch},       {"variant", t.variant},        {"backbone", t.backbone},
          {"backbone-path", t.backbone_path.empty() ? json(nullptr) : json(t.backbone_path)},
          {"batch-size", c.batch_size}, {"lr", c.learning_rate}, {"tau", t.tau},
          {"epochs", t.epochs},   {"seed", t.seed},              {"eval-every", t.eval_every},
          {"layers", t.layers},   {"heads", t.heads},            {"hidden", t.hidden},
          {"ffn", t.ffn},         {"max-len", t.max_len},        {"vocab-cap", t.vocab_cap},
          {"grid-mode", t.grid_mode}};
}

ProgressFn print_progress(std::string tag = {}) {
  return [tag](const MetricRecord& m) {
    std::printf("%sstep %6zu  train_loss %.6f  dev_rte_avg %.2f\n", tag.c_str(), m.step, m.train_loss,
                100.0 * m.dev_rte_avg);
    std::fflush(stdout);
  };
}

void print_rte_table(const RteReport& rep, std::optional<double> gamma) {
  std::printf("%-8s %8s %8s %8s %8s %8s\n", "", "Exp.", "Imp.", "Neu.", "Con.", "Avg.");
  std::printf("%-8s", "RTE");
  for (Origin o : kOrigins) {
    auto a = rep.at(o);
    if (a) std::printf(" %8.2f", 100.0 * *a);
    else std::printf(" %8s", "-");
  }
  std::printf(" %8.2f\n", 100.0 * rep.average);
  if (gamma) std::printf("gamma = %.6f\n", *gamma);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_make_synthetic(const DataOptions& d, std::uint64_t seed, const std::string& out_opt) {
  const fs::path out = out_opt.empty() ? home_dir() / "data" / ("synthetic-seed" + std::to_string(seed)) : fs::path(out_opt);
  fs::create_directories(out);
  const auto tr = make_synthetic_corpus(seed, d.synthetic_train, d.synthetic_vocab, SplitName::kTrain);
  const auto dv = make_synthetic_corpus(seed + 1, d.synthetic_dev, d.synthetic_vocab, SplitName::kDevelopment);
  const auto te = make_synthetic_corpus(seed + 2, d.synthetic_test, d.synthetic_vocab, SplitName::kTest);
  save_inli(tr.split, out / "train.jsonl");
  save_inli(dv.split, out / "dev.jsonl");
  save_inli(te.split, out / "test.jsonl");
  write_file(out / "splits.json",
             json{{"train", tr.split.size()}, {"development", dv.split.size()}, {"test", te.split.size()}}.dump(2) + "\n");
  std::string templates;
  for (const auto* c : {&tr, &dv, &te}) {
    for (std::size_t i = 0; i < c->split.size(); ++i) {
      const auto& t = c->templates[i];
      templates += json{{"id", c->split[i].id},
                        {"literal", t.literal},
                        {"hidden", t.hidden},
                        {"anti_literal", t.anti_literal},
                        {"anti_hidden", t.anti_hidden},
                        {"unrelated_literal", t.unrelated_literal}}
                       .dump() +
                   "\n";
    }
  }
  write_file(out / "templates.jsonl", templates);

  RunManifest m;
  m.command = "make-synthetic";
  m.args = data_args(d);
  m.args["seed"] = seed;
  m.args["out"] = out.string();
  m.config = m.args;
  m.seeds["seed"] = seed;
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "splits.json", "templates.jsonl"}) {
    m.outputs[f] = (out / f).string();
  }
  m.write(out / "run_manifest.json");
  std::printf("wrote synthetic corpus to %s (train %zu, dev %zu, test %zu)\n", out.string().c_str(), tr.split.size(),
              dv.split.size(), te.split.size());
  return kOk;
}

int cmd_train(const DataOptions& d, const TrainOptions& t, const std::string& out_opt) {
  const TrainConfig cfg = make_train_config(t);
  const fs::path out = out_opt.empty() ? default_out("train", t.seed) : fs::path(out_opt);
  RunManifest m;
  m.command = "train";
  m.args = data_args(d);
  m.args.update(train_args(t, cfg));
  m.args["out"] = out.string();
  m.config = cfg;
  m.seeds["seed"] = t.seed;
  const Splits s = load_splits(d, t.seed, m);
  std::printf("training %s encoder, variant %s, batch %zu, lr %g, %zu epochs on %zu samples\n", t.arch.c_str(),
              t.variant.c_str(), cfg.batch_size, cfg.learning_rate, cfg.epochs, s.train.size());
  Checkpoint ckpt = [&] {
    try {
      return train(cfg, s.train, s.dev, std::nullopt, print_progress());
    } catch (const TrainingError& e) {
      fs::create_directories(out);
      write_file(out / "abort.json", json{{"error", e.what()}}.dump(2) + "\n");
      throw;
    }
  }();
  save_checkpoint(ckpt, out);
  m.outputs["checkpoint"] = out.string();
  m.outputs["metrics"] = (out / "metrics.jsonl").string();
  m.write(out / "run_manifest.json");
  std::printf("best dev RTE average %.2f at step %zu (gamma %.6f); checkpoint written to %s\n",
              100.0 * ckpt.dev_rte_avg, ckpt.step, ckpt.gamma, out.string().c_str());
  return kOk;
}

struct EvalOptions {
  std::string ckpt;
  std::string dev;
  std::string test;
  std::string data;
  std::string pairs;
  std::string baseline;
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_eval_rte(const EvalOptions& e) {
  if (e.ckpt.empty()) throw ConfigError("eval rte requires --ckpt");
  std::string dev_path = e.dev, test_path = e.test;
  if (!e.data.empty()) {
    if (dev_path.empty()) dev_path = split_file(e.data, SplitName::kDevelopment).string();
    if (test_path.empty()) test_path = split_file(e.data, SplitName::kTest).string();
  }
  if (dev_path.empty() || test_path.empty()) throw ConfigError("eval rte requires --dev and --test (or --data DIR)");
  const Checkpoint ckpt = load_checkpoint(resolve_locator(e.ckpt));
  const auto dev = to_rte_instances(load_inli(dev_path, SplitName::kDevelopment));
  const auto test = to_rte_instances(load_inli(test_path, SplitName::kTest));
  const auto tuned = rte_tune_and_report(ckpt.encoder, dev);
  const RteReport rep = rte_evaluate(ckpt.encoder, test, tuned.gamma);
  json report = to_json(rep, tuned.gamma.value());
  report["dev_avg"] = tuned.dev.average;

  const fs::path out = e.out.empty() ? fs::path(e.ckpt) / "eval" : fs::path(e.out);
  fs::create_directories(out);
  write_file(out / "rte_report.json", report.dump(2) + "\n");
  RunManifest m;
  m.command = "eval rte";
  m.args = {{"ckpt", e.ckpt}, {"dev", dev_path}, {"test", test_path}, {"out", out.string()}};
  m.config = m.args;
  m.add_input(dev_path);
  m.add_input(test_path);
  m.add_input(fs::path(e.ckpt) / "encoder" / "params.bin");
  m.outputs["report"] = (out / "rte_report.json").string();
  m.write(out / "run_manifest_rte.json");
  print_rte_table(rep, tuned.gamma.value());
  return kOk;
}

// Pairwise JSONL ({implicit_sentence, explicit_sentence}) or INLI JSONL
// (premise-vs-hypothesis pairs), detected from the first record.
std::vector<EisPair> load_eis_pairs(const fs::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line) && trim(line).empty()) {
  }
  json first;
  try {
    first = json::parse(line);
  } catch (const json::exception&) {
    throw SchemaError("line 1: malformed JSON in " + path.string());
  }
  if (first.contains("premise")) return to_eis_pairs_from_inli(load_inli(path, SplitName::kTest), seed);
  return load_pairwise(path, seed);
}

int cmd_eval_eis(const EvalOptions& e) {
  if (e.pairs.empty()) throw ConfigError("eval eis requires --pairs");
  if (!e.baseline.empty() && e.baseline != "length") throw ConfigError("unknown baseline: " + e.baseline);
  const auto pairs = load_eis_pairs(e.pairs, e.seed);
  EisReport rep;
  std::string model_name;
  if (e.baseline == "length") {
    rep = eis_evaluate_length(pairs);
    model_name = "Length";
  } else {
    if (e.ckpt.empty()) throw ConfigError("eval eis requires --ckpt unless --baseline length is given");
    const Checkpoint ckpt = load_checkpoint(resolve_locator(e.ckpt));
    rep = eis_evaluate(ckpt.encoder, pairs);
    model_name = "DualCSE";
  }
  const fs::path out = !e.out.empty() ? fs::path(e.out) : !e.ckpt.empty() ? fs::path(e.ckpt) / "eval" : home_dir() / "runs" / "eval-eis";
  fs::create_directories(out);
  write_file(out / "eis_report.json", to_json(rep).dump(2) + "\n");
  RunManifest m;
  m.command = "eval eis";
  m.args = {{"pairs", e.pairs}, {"seed", e.seed}, {"out", out.string()}};
  if (!e.ckpt.empty()) m.args["ckpt"] = e.ckpt;
  if (!e.baseline.empty()) m.args["baseline"] = e.baseline;
  m.config = m.args;
  m.seeds["seed"] = e.seed;
  m.add_input(e.pairs);
  m.outputs["report"] = (out / "eis_report.json").string();
  m.write(out / "run_manifest_eis.json");
  std::printf("EIS %-8s accuracy %.2f over %zu pairs\n", model_name.c_str(), 100.0 * rep.accuracy, rep.pairs);
  return kOk;
}

int cmd_ablate(const DataOptions& d, const TrainOptions& t, const std::string& out_opt) {
  const fs::path out = out_opt.empty() ? default_out("ablate", t.seed) : fs::path(out_opt);
  RunManifest m;
  m.command = "ablate";
  const TrainConfig base = make_train_config(t);
  m.args = data_args(d);
  m.args.update(train_args(t, base));
  m.args.erase("variant");
  m.args["out"] = out.string();
  m.config = base;
  m.seeds["seed"] = t.seed;
  const Splits s = load_splits(d, t.seed, m);
  const DatasetSplit& eval_split = s.test ? *s.test : s.dev;
  const auto rte_eval = to_rte_instances(eval_split);
  const auto eis_pairs = to_eis_pairs_from_inli(eval_split, t.seed);

  json rows = json::array();
  bool any_failed = false;
  std::printf("%-20s %10s %10s\n", "Loss function", "RTE", "EIS");
  for (LossVariant v : kLossVariants) {
    TrainConfig cfg = base;
    cfg.variant = v;
    json row{{"variant", to_string(v)}};
    try {
      const Checkpoint ck = train(cfg, s.train, s.dev, std::nullopt, print_progress("[" + std::string(to_string(v)) + "] "));
      const RteReport rep = rte_evaluate(ck.encoder, rte_eval, RteThreshold(ck.gamma));
      const EisReport eis = eis_evaluate(ck.encoder, eis_pairs);
      row["rte_avg"] = rep.average;
      row["eis_accuracy"] = eis.accuracy;
      row["dev_rte_avg"] = ck.dev_rte_avg;
      save_checkpoint(ck, out / std::string(to_string(v)));
      m.outputs[std::string(to_string(v))] = (out / std::string(to_string(v))).string();
    } catch (const std::exception& ex) {
      any_failed = true;
      row["error"] = ex.what();
      std::fprintf(stderr, "variant %s failed: %s\n", std::string(to_string(v)).c_str(), ex.what());
    }
    rows.push_back(row);
  }
  for (const auto& row : rows) {
    if (row.contains("error")) {
      std::printf("%-20s %10s %10s\n", row["variant"].get<std::string>().c_str(), "failed", "failed");
    } else {
      std::printf("%-20s %10.2f %10.2f\n", row["variant"].get<std::string>().c_str(), 100.0 * row["rte_avg"].get<double>(),
                  100.0 * row["eis_accuracy"].get<double>());
    }
  }
  fs::create_directories(out);
  write_file(out / "ablation.json", json{{"evaluated_on", to_string(eval_split.name())}, {"rows", rows}}.dump(2) + "\n");
  m.outputs["table"] = (out / "ablation.json").string();
  m.write(out / "run_manifest.json");
  return any_failed ? kRunError : kOk;
}

int cmd_grid(const DataOptions& d, const TrainOptions& t, const std::vector<std::size_t>& batch_sizes,
             const std::vector<double>& lrs, const std::string& out_opt) {
  const fs::path out = out_opt.empty() ? default_out("grid", t.seed) : fs::path(out_opt);
  TrainOptions topt = t;
  topt.grid_mode = true;
  if (!topt.batch_size) topt.batch_size = batch_sizes.front();
  const TrainConfig base = make_train_config(topt);
  RunManifest m;
  m.command = "grid";
  m.args = data_args(d);
  m.args.update(train_args(t, base));
  m.args.erase("batch-size");
  m.args.erase("lr");
  m.args["batch-sizes"] = batch_sizes;
  m.args["lrs"] = lrs;
  m.args["out"] = out.string();
  m.config = base;
  m.seeds["seed"] = t.seed;
  const Splits s = load_splits(d, t.seed, m);
  const GridResult g = grid_search(batch_sizes, lrs, base, s.train, s.dev, [](const GridCell& c) {
    if (c.dev_rte_avg) std::printf("cell batch %3zu lr %-8g dev_rte_avg %.2f\n", c.batch_size, c.learning_rate, 100.0 * *c.dev_rte_avg);
    else std::printf("cell batch %3zu lr %-8g failed: %s\n", c.batch_size, c.learning_rate, c.error.c_str());
    std::fflush(stdout);
  });
  // Table: rows = batch size, columns = learning rate.
  std::printf("%-10s", "batch\\lr");
  for (double lr : lrs) std::printf(" %10g", lr);
  std::printf("\n");
  for (std::size_t b = 0; b < batch_sizes.size(); ++b) {
    std::printf("%-10zu", batch_sizes[b]);
    for (std::size_t l = 0; l < lrs.size(); ++l) {
      const std::size_t k = b * lrs.size() + l;
      const auto& c = g.cells[k];
      const bool best = g.best && *g.best == k;
      if (c.dev_rte_avg) std::printf(" %9.2f%s", 100.0 * *c.dev_rte_avg, best ? "*" : " ");
      else std::printf(" %10s", "failed");
    }
    std::printf("\n");
  }
  fs::create_directories(out);
  write_file(out / "grid.json", to_json(g).dump(2) + "\n");
  m.outputs["grid"] = (out / "grid.json").string();
  m.write(out / "run_manifest.json");
  return g.best ? kOk : kRunError;
}

struct RetrieveOptions {
  std::string ckpt;
  std::string corpus;
  std::string query_file;
  std::size_t k = 3;
  std::string pool = "all";
  std::string out;
};

std::vector<std::string> read_queries(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open query file " + path.string());
  std::vector<std::string> queries;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '{') {
      const json obj = json::parse(t, nullptr, false);
      if (obj.is_object()) {
        if (obj.contains("query") && obj["query"].is_string()) {
          queries.push_back(obj["query"].get<std::string>());
          continue;
        }
        if (obj.contains("premise") && obj["premise"].is_string()) {
          queries.push_back(obj["premise"].get<std::string>());
          continue;
        }
      }
    }
    queries.emplace_back(t);
  }
  return queries;
}

int cmd_retrieve(const RetrieveOptions& r) {
  if (r.ckpt.empty() || r.corpus.empty() || r.query_file.empty()) {
    throw ConfigError("retrieve requires --ckpt, --corpus and --query-file");
  }
  const auto queries = read_queries(r.query_file);
  if (queries.empty()) throw ValidationError("query file " + r.query_file + " contains no queries");
  const Checkpoint ckpt = load_checkpoint(resolve_locator(r.ckpt));
  const DatasetSplit corpus = load_inli(r.corpus, SplitName::kTrain);
  const auto pool = hypothesis_pool(corpus, r.pool == "entailment" ? RetrievalPool::kEntailmentsOnly
                                                                   : RetrievalPool::kAllHypotheses);
  const DualIndex index = build_index(pool, ckpt.encoder);

  std::string jsonl;
  for (const auto& q : queries) {
    std::printf("query: %s\n", q.c_str());
    for (View v : {View::kExplicit, View::kImplicit}) {
      const RetrievalResult res = query(index, q, v, r.k, ckpt.encoder);
      jsonl += to_json(res).dump() + "\n";
      std::printf("  %s:\n", std::string(view_word(v)).c_str());
      for (const auto& h : res.hits) std::printf("    %zu. [%.4f] %s\n", h.rank, h.score, h.text.c_str());
    }
  }
  const fs::path out = r.out.empty() ? fs::path(r.ckpt) / "retrieval" : fs::path(r.out);
  fs::create_directories(out);
  write_file(out / "retrieval.jsonl", jsonl);
  RunManifest m;
  m.command = "retrieve";
  m.args = {{"ckpt", r.ckpt}, {"corpus", r.corpus}, {"query-file", r.query_file}, {"k", r.k}, {"pool", r.pool},
            {"out", out.string()}};
  m.config = m.args;
  m.config["index_fingerprint"] = index.fingerprint;
  m.add_input(r.corpus);
  m.add_input(r.query_file);
  m.outputs["results"] = (out / "retrieval.jsonl").string();
  m.write(out / "run_manifest.json");
  return kOk;
}

// Expands `--config FILE` into flags that the user did not pass explicitly.
// FILE is either a flat {flag: value} object or a run manifest with "args".
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string config_path;
  std::size_t insert_at = 1;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  // Insert after the (sub)command words.
  while (insert_at < args.size() && args[insert_at].rfind("-", 0) != 0) ++insert_at;
  json cfg;
  try {
    cfg = json::parse(read_file(config_path));
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + config_path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  const json& flat = cfg.contains("args") ? cfg["args"] : cfg;
  auto extra = args_to_flags(flat, args);
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), extra.begin(), extra.end());
  return args;
}

int run(int argc, char** argv) {
  CLI::App app{"Dual-view sentence embeddings: training, evaluation and retrieval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));
  std::string config_file;

  DataOptions data;
  TrainOptions topt;
  std::string out;

  auto* synth = app.add_subcommand("make-synthetic", "write a seeded synthetic INLI-format corpus");
  DataOptions synth_data;
  std::uint64_t synth_seed = 0;
  synth->add_option("--seed", synth_seed);
  synth->add_option("--synthetic-train", synth_data.synthetic_train);
  synth->add_option("--synthetic-dev", synth_data.synthetic_dev);
  synth->add_option("--synthetic-test", synth_data.synthetic_test);
  synth->add_option("--synthetic-vocab", synth_data.synthetic_vocab);
  synth->add_option("--out", out, "output directory");
  synth->add_option("--config", config_file);
  synth->add_option("--data", synth_data.data)->check(CLI::IsMember({"synthetic"}));

  auto* train_cmd = app.add_subcommand("train", "train a dual-view encoder");
  add_data_options(train_cmd, data);
  add_train_options(train_cmd, topt);
  train_cmd->add_option("--out", out, "checkpoint directory");
  train_cmd->add_option("--config", config_file, "JSON config or run manifest");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->require_subcommand(1);
  EvalOptions eopt;
  auto* eval_rte = eval_cmd->add_subcommand("rte", "entailment recognition (gamma tuned on dev)");
  eval_rte->add_option("--ckpt", eopt.ckpt);
  eval_rte->add_option("--dev", eopt.dev);
  eval_rte->add_option("--test", eopt.test);
  eval_rte->add_option("--data", eopt.data, "directory with dev/test JSONL");
  eval_rte->add_option("--out", eopt.out);
  eval_rte->add_option("--config", config_file);
  auto* eval_eis = eval_cmd->add_subcommand("eis", "implicitness pairwise accuracy");
  eval_eis->add_option("--ckpt", eopt.ckpt);
  eval_eis->add_option("--pairs", eopt.pairs, "pairwise JSONL or INLI JSONL");
  eval_eis->add_option("--baseline", eopt.baseline, "length");
  eval_eis->add_option("--seed", eopt.seed, "seed for pair side randomization");
  eval_eis->add_option("--out", eopt.out);
  eval_eis->add_option("--config", config_file);

  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare all four loss variants");
  add_data_options(ablate_cmd, data);
  add_train_options(ablate_cmd, topt);
  ablate_cmd->add_option("--out", out);
  ablate_cmd->add_option("--config", config_file);

  auto* grid_cmd = app.add_subcommand("grid", "batch size x learning rate grid search");
  std::vector<std::size_t> grid_bs{16, 32, 64};
  std::vector<double> grid_lrs{1e-5, 3e-5, 5e-5};
  add_data_options(grid_cmd, data);
  add_train_options(grid_cmd, topt);
  grid_cmd->add_option("--batch-sizes", grid_bs)->delimiter(',');
  grid_cmd->add_option("--lrs", grid_lrs)->delimiter(',');
  grid_cmd->add_option("--out", out);
  grid_cmd->add_option("--config", config_file);

  auto* retrieve_cmd = app.add_subcommand("retrieve", "top-k hypotheses for each query under both views");
  RetrieveOptions ropt;
  retrieve_cmd->add_option("--ckpt", ropt.ckpt);
  retrieve_cmd->add_option("--corpus", ropt.corpus, "INLI JSONL whose hypotheses form the index");
  retrieve_cmd->add_option("--query-file", ropt.query_file, "one query per line (plain text or JSON)");
  retrieve_cmd->add_option("--k", ropt.k, "hits per view")->check(CLI::PositiveNumber);
  retrieve_cmd->add_option("--pool", ropt.pool, "all | entailment")->check(CLI::IsMember({"all", "entailment"}));
  retrieve_cmd->add_option("--out", ropt.out);
  retrieve_cmd->add_option("--config", config_file);

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  std::vector<char*> cargv;
  for (auto& a : expanded) cargv.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*synth) return cmd_make_synthetic(synth_data, synth_seed, out);
  if (*train_cmd) return cmd_train(data, topt, out);
  if (*eval_rte) return cmd_eval_rte(eopt);
  if (*eval_eis) return cmd_eval_eis(eopt);
  if (*ablate_cmd) return cmd_ablate(data, topt, out);
  if (*grid_cmd) return cmd_grid(data, topt, grid_bs, grid_lrs, out);
  if (*retrieve_cmd) return cmd_retrieve(ropt);
  return kConfigError;
}

}  // namespace dualcse::cli

int main(int argc, char** argv) {
  using namespace dualcse;
  using namespace dualcse::cli;
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kRunError;
  } catch (const SchemaError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kDataError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kRunError;
  }
}
