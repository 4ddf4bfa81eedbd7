#pragma once

// Contrastive training loop, best-checkpoint retention, checkpoint I/O and
// the batch-size x learning-rate grid search.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dualcse/corpus.hpp"
#include "dualcse/encoder.hpp"
#include "dualcse/error.hpp"
#include "dualcse/evaluation.hpp"
#include "dualcse/objective.hpp"
#include "dualcse/optimizer.hpp"
#include "json.hpp"

namespace dualcse {

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 5e-5;
  double tau = kDefaultTau;
  LossVariant variant = LossVariant::kFull;
  std::size_t epochs = 3;
  std::uint64_t seed = 0;
  EncoderSpec encoder;
  std::size_t eval_every = 0;  // steps between dev evaluations; 0 = end of each epoch only
  double warmup_fraction = 0.1;
  double weight_decay = 0.0;
  std::size_t max_vocab = 0;  // toy tokenizer cap, 0 = unbounded
  bool grid_mode = false;     // restrict batch_size to the grid {16, 32, 64}

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    (void)Temperature(tau);
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (warmup_fraction < 0 || warmup_fraction > 1) throw ConfigError("warmup_fraction must lie in [0, 1]");
    if (grid_mode && batch_size != 16 && batch_size != 32 && batch_size != 64) {
      throw ConfigError("grid mode supports batch sizes 16, 32 and 64 only");
    }
    encoder.validate();
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, batch_size, learning_rate, tau, variant, epochs, seed,
                                                encoder, eval_every, warmup_fraction, weight_decay, max_vocab,
                                                grid_mode)

// Defaults: cross 64 / 5e-5, bi 32 / 3e-5.
inline TrainConfig default_train_config(Architecture arch) {
  TrainConfig c;
  c.encoder.architecture = arch;
  if (arch == Architecture::kBi) {
    c.batch_size = 32;
    c.learning_rate = 3e-5;
  }
  return c;
}

struct MetricRecord {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean loss over steps since the previous record
  double dev_rte_avg = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MetricRecord, step, train_loss, dev_rte_avg)

struct Checkpoint {
  Encoder encoder;
  TrainConfig config;
  std::size_t step = 0;
  double dev_rte_avg = 0.0;
  double gamma = 0.0;
  std::vector<MetricRecord> metrics;  // whole run, not just up to `step`
  std::vector<double> step_losses;    // whole run, one per optimizer step
};

// Encodes one batch into the eight role matrices on a recording tape.
// `vars[role][i]` holds the tape variable of instance i.
struct TapedBatch {
  BatchEmbeddings embeddings;
  std::array<std::vector<ad::Var>, kRoleCount> vars;
};

inline TapedBatch encode_batch(ad::Tape& tape, Encoder& encoder, const Batch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  TapedBatch out;
  out.embeddings = BatchEmbeddings::zeros(n, encoder.dim());
  auto put = [&](Role role, Eigen::Index i, const std::string& text, View view) {
    ad::Var v = encoder.forward(tape, text, view);
    out.embeddings[role].row(i) = tape.value(v).row(0);
    out.vars[static_cast<int>(role)].push_back(v);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const InliSample& s = batch.samples[static_cast<std::size_t>(i)];
    put(Role::kPremiseR, i, s.premise, View::kExplicit);
    put(Role::kPremiseU, i, s.premise, View::kImplicit);
    put(Role::kExplicitR, i, s.explicit_entailment, View::kExplicit);
    put(Role::kExplicitU, i, s.explicit_entailment, View::kImplicit);
    put(Role::kImpliedR, i, s.implied_entailment, View::kExplicit);
    put(Role::kImpliedU, i, s.implied_entailment, View::kImplicit);
    put(Role::kContradictionR, i, s.contradiction, View::kExplicit);
    put(Role::kContradictionU, i, s.contradiction, View::kImplicit);
  }
  return out;
}

// Owns the optimizer state for one training run; one step() per batch.
class Trainer {
 public:
  Trainer(const TrainConfig& config, Encoder& encoder, std::size_t total_steps)
      : config_(config),
        encoder_(encoder),
        schedule_(config.learning_rate, total_steps, config.warmup_fraction),
        adam_(AdamConfig{.weight_decay = config.weight_decay}) {}

  // Returns the batch loss before the update.
  double step(const Batch& batch, std::string_view batch_label = {}) {
    ad::Tape tape;
    encoder_.zero_grad();
    TapedBatch tb = encode_batch(tape, encoder_, batch);
    LossAndGrad lg;
    try {
      lg = dual_loss_and_grad(tb.embeddings, Temperature(config_.tau), config_.variant);
    } catch (const ValidationError& e) {
      throw TrainingError(diagnostic(batch, batch_label, e.what()));
    }
    if (!std::isfinite(lg.loss)) throw TrainingError(diagnostic(batch, batch_label, "non-finite loss"));
    for (int role = 0; role < kRoleCount; ++role) {
      for (std::size_t i = 0; i < tb.vars[role].size(); ++i) {
        tape.seed(tb.vars[role][i], lg.grad.roles[role].row(static_cast<Eigen::Index>(i)));
      }
    }
    tape.backward();
    adam_.step(encoder_.params(), schedule_.at(steps_));
    for (const auto& [name, p] : encoder_.params()) {
      if (!p.value.allFinite()) throw TrainingError(diagnostic(batch, batch_label, "non-finite parameter " + name));
    }
    ++steps_;
    return lg.loss;
  }

  std::size_t steps() const { return steps_; }

 private:
  static std::string diagnostic(const Batch& batch, std::string_view label, std::string_view what) {
    std::ostringstream os;
    os << "training aborted at batch " << (label.empty() ? std::string("?") : std::string(label)) << ": " << what
       << "; sample ids:";
    for (const auto& s : batch.samples) os << ' ' << s.id;
    return os.str();
  }

  TrainConfig config_;
  Encoder& encoder_;
  WarmupLinearSchedule schedule_;
  Adam adam_;
  std::size_t steps_ = 0;
};

inline std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL * (epoch + 1);
}

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

using ProgressFn = std::function<void(const MetricRecord&)>;

// Trains from `initial` (or a freshly seeded encoder) and returns the
// checkpoint with the best dev RTE average accuracy. A later evaluation
// replaces the best only if strictly better.
inline Checkpoint train(const TrainConfig& config, const DatasetSplit& train_split, const DatasetSplit& dev_split,
                        std::optional<Encoder> initial = {}, const ProgressFn& progress = {}) {
  config.validate();
  if (train_split.empty()) throw ValidationError("training split is empty");
  Encoder encoder = initial ? std::move(*initial)
                            : Encoder::create(config.encoder, build_vocabulary(train_split, config.max_vocab), config.seed);
  const auto dev = to_rte_instances(dev_split);
  const std::size_t per_epoch = steps_per_epoch(train_split.size(), config.batch_size);
  Trainer trainer(config, encoder, per_epoch * config.epochs);

  std::optional<Checkpoint> best;
  std::vector<MetricRecord> metrics;
  std::vector<double> losses;
  double loss_since = 0.0;
  std::size_t count_since = 0;

  auto evaluate = [&] {
    const auto tuned = rte_tune_and_report(encoder, dev);
    MetricRecord rec{trainer.steps(), count_since ? loss_since / static_cast<double>(count_since) : 0.0,
                     tuned.dev.average};
    loss_since = 0.0;
    count_since = 0;
    metrics.push_back(rec);
    if (progress) progress(rec);
    if (!best || rec.dev_rte_avg > best->dev_rte_avg) {
      best = Checkpoint{encoder, config, rec.step, rec.dev_rte_avg, tuned.gamma.value(), {}, {}};
    }
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = batch_iter(train_split, config.batch_size, epoch_seed(config.seed, epoch));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const double loss = trainer.step(batches[b], "epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      losses.push_back(loss);
      loss_since += loss;
      ++count_since;
      if (config.eval_every > 0 && trainer.steps() % config.eval_every == 0) evaluate();
    }
    if (count_since > 0) evaluate();
  }
  best->metrics = std::move(metrics);
  best->step_losses = std::move(losses);
  return std::move(*best);
}

inline constexpr int kTrainerStateVersion = 1;

inline std::string metrics_jsonl(const std::vector<MetricRecord>& metrics) {
  std::string out;
  for (const auto& m : metrics) out += json(m).dump() + "\n";
  return out;
}

// Layout: <dir>/encoder/ (encoder container), <dir>/trainer.json, <dir>/metrics.jsonl
inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ckpt.encoder.save(dir / "encoder");
  json state{{"version", kTrainerStateVersion},
             {"config", ckpt.config},
             {"step", ckpt.step},
             {"dev_rte_avg", ckpt.dev_rte_avg},
             {"gamma", ckpt.gamma},
             {"step_losses", ckpt.step_losses}};
  write_file(dir / "trainer.json", state.dump(2) + "\n");
  write_file(dir / "metrics.jsonl", metrics_jsonl(ckpt.metrics));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<EncoderSpec>& expected = {}) {
  if (!std::filesystem::exists(dir / "trainer.json")) throw CheckpointError("no trainer state in " + dir.string());
  json state;
  try {
    state = json::parse(read_file(dir / "trainer.json"));
  } catch (const json::exception& e) {
    throw CheckpointError("malformed trainer state: " + std::string(e.what()));
  }
  if (state.value("version", -1) != kTrainerStateVersion) {
    throw CheckpointError("unsupported trainer state version " + state.value("version", json()).dump());
  }
  Encoder enc = Encoder::load(dir / "encoder", expected);
  try {
    Checkpoint c{std::move(enc), state.at("config").get<TrainConfig>(), state.at("step").get<std::size_t>(),
                 state.at("dev_rte_avg").get<double>(), state.at("gamma").get<double>(), {},
                 state.value("step_losses", std::vector<double>{})};
    if (std::filesystem::exists(dir / "metrics.jsonl")) {
      std::istringstream in(read_file(dir / "metrics.jsonl"));
      std::string line;
      while (std::getline(in, line)) {
        if (!trim(line).empty()) c.metrics.push_back(json::parse(line).get<MetricRecord>());
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError("malformed trainer state: " + std::string(e.what()));
  }
}

struct GridCell {
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  std::optional<double> dev_rte_avg;  // empty when the cell failed
  std::string error;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::optional<std::size_t> best;  // index into cells; first maximum wins
};

inline json to_json(const GridResult& g) {
  json cells = json::array();
  for (std::size_t k = 0; k < g.cells.size(); ++k) {
    const auto& c = g.cells[k];
    json cell{{"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"dev_rte_avg", c.dev_rte_avg ? json(*c.dev_rte_avg) : json(nullptr)},
              {"best", g.best && *g.best == k}};
    if (!c.error.empty()) cell["error"] = c.error;
    cells.push_back(cell);
  }
  return json{{"cells", cells}};
}

// One training run per (batch size, learning rate) cell. Failed cells are
// recorded and the search continues.
inline GridResult grid_search(const std::vector<std::size_t>& batch_sizes, const std::vector<double>& learning_rates,
                              const TrainConfig& base, const DatasetSplit& train_split, const DatasetSplit& dev_split,
                              const std::function<void(const GridCell&)>& on_cell = {}) {
  if (batch_sizes.empty() || learning_rates.empty()) throw ConfigError("grid must be nonempty");
  GridResult result;
  for (std::size_t bs : batch_sizes) {
    for (double lr : learning_rates) {
      GridCell cell{bs, lr, std::nullopt, {}};
      try {
        TrainConfig cfg = base;
        cfg.batch_size = bs;
        cfg.learning_rate = lr;
        cell.dev_rte_avg = train(cfg, train_split, dev_split).dev_rte_avg;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (cell.dev_rte_avg && (!result.best || *cell.dev_rte_avg > *result.cells[*result.best].dev_rte_avg)) {
        result.best = result.cells.size();
      }
      result.cells.push_back(cell);
      if (on_cell) on_cell(cell);
    }
  }
  return result;
}

}  // namespace dualcse
