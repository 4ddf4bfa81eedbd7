#include <gtest/gtest.h>

#include <filesystem>

#include "dualcse/trainer.hpp"

using namespace dualcse;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(Architecture arch = Architecture::kCross) {
  TrainConfig c = default_train_config(arch);
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  c.epochs = 3;
  c.seed = 1;
  c.encoder.toy = ToyConfig{1, 2, 16, 32};
  c.encoder.embedding_dim = 16;
  c.encoder.max_sequence_length = 16;
  return c;
}

const DatasetSplit& train_split() {
  static const DatasetSplit s = make_synthetic_corpus(10, 64, 40, SplitName::kTrain).split;
  return s;
}

const DatasetSplit& dev_split() {
  static const DatasetSplit s = make_synthetic_corpus(11, 24, 40, SplitName::kDevelopment).split;
  return s;
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to) {
  double s = 0;
  for (std::size_t i = from; i < to; ++i) s += v[i];
  return s / static_cast<double>(to - from);
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dualcse_trainer_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Trainer, LossDecreases) {
  const auto ck = train(tiny_config(), train_split(), dev_split());
  ASSERT_EQ(ck.step_losses.size(), 12u);
  EXPECT_LT(mean(ck.step_losses, 8, 12), mean(ck.step_losses, 0, 4));
}

TEST(Trainer, DeterministicForSeed) {
  const auto a = train(tiny_config(Architecture::kBi), train_split(), dev_split());
  const auto b = train(tiny_config(Architecture::kBi), train_split(), dev_split());
  EXPECT_EQ(a.step_losses, b.step_losses);
  for (const auto& [name, p] : a.encoder.params()) EXPECT_EQ(b.encoder.params().at(name).value, p.value);
}

TEST(Trainer, BestCheckpointIsFirstMaximum) {
  TrainConfig c = tiny_config();
  c.eval_every = 2;
  const auto ck = train(c, train_split(), dev_split());
  ASSERT_EQ(ck.metrics.size(), 6u);
  double best = -1;
  std::size_t best_step = 0;
  for (const auto& m : ck.metrics) {
    if (m.dev_rte_avg > best) {
      best = m.dev_rte_avg;
      best_step = m.step;
    }
  }
  EXPECT_EQ(ck.dev_rte_avg, best);
  EXPECT_EQ(ck.step, best_step);
}

TEST(Trainer, NonFiniteLossAborts) {
  TrainConfig c = tiny_config();
  c.learning_rate = 1e300;
  try {
    train(c, train_split(), dev_split());
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("syn-10-"), std::string::npos) << e.what();
  }
}

TEST(Trainer, CheckpointRoundTrip) {
  const auto ck = train(tiny_config(), train_split(), dev_split());
  const auto dir = temp_dir("roundtrip");
  save_checkpoint(ck, dir);
  EXPECT_TRUE(fs::exists(dir / "metrics.jsonl"));
  const auto back = load_checkpoint(dir);
  EXPECT_EQ(back.step, ck.step);
  EXPECT_EQ(back.dev_rte_avg, ck.dev_rte_avg);
  EXPECT_EQ(back.gamma, ck.gamma);
  EXPECT_EQ(back.step_losses, ck.step_losses);
  EXPECT_EQ(back.metrics.size(), ck.metrics.size());
  EXPECT_EQ(json(back.config), json(ck.config));
  for (const auto& [name, p] : ck.encoder.params()) EXPECT_EQ(back.encoder.params().at(name).value, p.value);
  // The stored dev metric is reproducible from the stored weights.
  const auto dev = to_rte_instances(dev_split());
  const auto tuned = rte_tune_and_report(back.encoder, dev);
  EXPECT_EQ(tuned.dev.average, ck.dev_rte_avg);
  EXPECT_EQ(tuned.gamma.value(), ck.gamma);
}

TEST(Trainer, CheckpointSpecAndVersionChecks) {
  const auto ck = train(tiny_config(), train_split(), dev_split());
  const auto dir = temp_dir("checks");
  save_checkpoint(ck, dir);
  EXPECT_THROW(load_checkpoint(dir, tiny_config(Architecture::kBi).encoder), ConfigError);
  json state = json::parse(read_file(dir / "trainer.json"));
  state["version"] = 99;
  write_file(dir / "trainer.json", state.dump());
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
}

TEST(Trainer, ResumeFromInitialEncoder) {
  const auto first = train(tiny_config(), train_split(), dev_split());
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto second = train(c, train_split(), dev_split(), first.encoder);
  EXPECT_EQ(second.step_losses.size(), 4u);
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c = tiny_config();
  c.grid_mode = true;
  c.batch_size = 20;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.tau = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(default_train_config(Architecture::kCross).batch_size, 64u);
  EXPECT_EQ(default_train_config(Architecture::kBi).learning_rate, 3e-5);
}

TEST(Trainer, ConfigJsonRoundTrip) {
  TrainConfig c = tiny_config(Architecture::kBi);
  c.variant = LossVariant::kNoIntra;
  const TrainConfig back = json(c).get<TrainConfig>();
  EXPECT_EQ(json(back), json(c));
  EXPECT_EQ(json(c)["variant"], "no_intra");
}

TEST(Grid, SingleCell) {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto g = grid_search({16}, {1e-3}, c, train_split(), dev_split());
  ASSERT_EQ(g.cells.size(), 1u);
  ASSERT_TRUE(g.best.has_value());
  EXPECT_EQ(*g.best, 0u);
}

TEST(Grid, NineCellsWithFailureRecorded) {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  c.grid_mode = true;
  const auto g = grid_search({16, 32, 64}, {1e-4, 1e-3, 1e300}, c, train_split(), dev_split());
  ASSERT_EQ(g.cells.size(), 9u);
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(g.cells[k].batch_size, std::vector<std::size_t>({16, 32, 64})[k / 3]);
    // A single huge step can stay finite, so only multi-step cells must fail.
    if (k % 3 == 2 && k / 3 < 2) {
      EXPECT_FALSE(g.cells[k].dev_rte_avg.has_value());
      EXPECT_FALSE(g.cells[k].error.empty());
    }
  }
  ASSERT_TRUE(g.best.has_value());
  for (const auto& cell : g.cells) {
    if (cell.dev_rte_avg) EXPECT_LE(*cell.dev_rte_avg, *g.cells[*g.best].dev_rte_avg);
  }
  EXPECT_EQ(to_json(g)["cells"].size(), 9u);
}

TEST(TrainerStep, PushesViewsApartFromIdenticalStart) {
  TrainConfig c = tiny_config(Architecture::kBi);
  Encoder enc = Encoder::create(c.encoder, build_vocabulary(train_split()), 3);
  const auto batch = batch_iter(train_split(), 16, 0)[0];
  auto mean_cos = [&] {
    double s = 0;
    for (const auto& x : batch.samples) {
      const auto d = enc.encode_dual(x.premise);
      s += cosine(d.r, d.u);
    }
    return s / static_cast<double>(batch.size());
  };
  EXPECT_NEAR(mean_cos(), 1.0, 1e-12);
  Trainer trainer(c, enc, 10);
  trainer.step(batch);
  EXPECT_LT(mean_cos(), 1.0 - 1e-9);
}
