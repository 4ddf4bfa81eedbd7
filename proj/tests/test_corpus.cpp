#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "dualcse/corpus.hpp"

using namespace dualcse;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dualcse_corpus_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

InliSample sample(const std::string& id) {
  return {id, "a man plays a guitar loudly", "someone makes music", "a man plays a guitar", "the man is famous",
          "nobody is playing anything"};
}

std::string record(const InliSample& s) { return to_json(s).dump(); }

}  // namespace

TEST(Corpus, RoundTripIsIdentity) {
  const auto dir = temp_dir("roundtrip");
  DatasetSplit split(SplitName::kTrain, {sample("1"), sample("2"), sample("x")});
  save_inli(split, dir / "train.jsonl");
  DatasetSplit back = load_inli(dir / "train.jsonl", SplitName::kTrain);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i], split[i]);
  EXPECT_EQ(fingerprint(back), fingerprint(split));
}

TEST(Corpus, MissingFieldNamesLine) {
  const auto dir = temp_dir("missing");
  json bad = to_json(sample("2"));
  bad.erase("contradiction");
  write_file(dir / "d.jsonl", record(sample("1")) + "\n" + bad.dump() + "\n");
  try {
    load_inli(dir / "d.jsonl", SplitName::kTest);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("contradiction"), std::string::npos) << msg;
  }
}

TEST(Corpus, EmptyFieldIsRejected) {
  const auto dir = temp_dir("emptyfield");
  InliSample s = sample("1");
  s.neutral = "   ";
  write_file(dir / "d.jsonl", record(s) + "\n");
  EXPECT_THROW(load_inli(dir / "d.jsonl", SplitName::kTest), ValidationError);
}

TEST(Corpus, DuplicateIdIsRejected) {
  const auto dir = temp_dir("dup");
  write_file(dir / "d.jsonl", record(sample("7")) + "\n" + record(sample("7")) + "\n");
  EXPECT_THROW(load_inli(dir / "d.jsonl", SplitName::kTrain), ValidationError);
}

TEST(Corpus, MalformedJsonIsSchemaError) {
  const auto dir = temp_dir("malformed");
  write_file(dir / "d.jsonl", record(sample("1")) + "\n{not json\n");
  EXPECT_THROW(load_inli(dir / "d.jsonl", SplitName::kTrain), SchemaError);
}

TEST(Corpus, SplitManifestCountsAreChecked) {
  const auto dir = temp_dir("manifest");
  write_file(dir / "splits.json", R"({"train": 3, "development": 1})");
  const auto m = SplitManifest::load(dir / "splits.json");
  EXPECT_NO_THROW(m.validate(DatasetSplit(SplitName::kTrain, {sample("1"), sample("2"), sample("3")})));
  EXPECT_THROW(m.validate(DatasetSplit(SplitName::kDevelopment, {sample("1"), sample("2")})), ValidationError);
  EXPECT_NO_THROW(m.validate(DatasetSplit(SplitName::kTest, {sample("1")})));
}

TEST(Corpus, RteInstancesCoverFourOrigins) {
  DatasetSplit split(SplitName::kTest, {sample("1"), sample("2")});
  const auto inst = to_rte_instances(split);
  ASSERT_EQ(inst.size(), 8u);
  std::map<Origin, int> count;
  for (const auto& i : inst) {
    ++count[i.origin];
    const bool ent = i.origin == Origin::kExplicitEntailment || i.origin == Origin::kImpliedEntailment;
    EXPECT_EQ(i.gold, ent ? RteLabel::kEntailment : RteLabel::kNonEntailment);
  }
  for (Origin o : kOrigins) EXPECT_EQ(count[o], 2);
}

TEST(Corpus, EisPairsFromInliPlacePremiseAsGold) {
  std::vector<InliSample> samples;
  for (int i = 0; i < 50; ++i) samples.push_back(sample(std::to_string(i)));
  DatasetSplit split(SplitName::kTest, samples);
  const auto pairs = to_eis_pairs_from_inli(split, 11);
  ASSERT_EQ(pairs.size(), 200u);
  int first = 0;
  for (const auto& p : pairs) {
    EXPECT_EQ(p.gold_sentence(), samples[0].premise);
    if (p.gold_more_implicit == 1) ++first;
  }
  EXPECT_GT(first, 60);
  EXPECT_LT(first, 140);
}

TEST(Corpus, EisSeedOnlyChangesPlacement) {
  std::vector<InliSample> samples;
  for (int i = 0; i < 20; ++i) samples.push_back(sample(std::to_string(i)));
  DatasetSplit split(SplitName::kTest, samples);
  auto multiset = [](const std::vector<EisPair>& pairs) {
    std::multiset<std::pair<std::string, std::string>> m;
    for (const auto& p : pairs) m.insert({p.gold_sentence(), p.other_sentence()});
    return m;
  };
  const auto a = to_eis_pairs_from_inli(split, 1), b = to_eis_pairs_from_inli(split, 2);
  EXPECT_EQ(multiset(a), multiset(b));
  bool placement_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) placement_differs |= a[i].gold_more_implicit != b[i].gold_more_implicit;
  EXPECT_TRUE(placement_differs);
}

TEST(Corpus, PairwiseIdenticalSentencesRejected) {
  const auto dir = temp_dir("pairwise");
  write_file(dir / "p.jsonl", R"({"implicit_sentence": "x y", "explicit_sentence": "x y"})" "\n");
  EXPECT_THROW(load_pairwise(dir / "p.jsonl", 0), ValidationError);
  write_file(dir / "q.jsonl", R"({"implicit_sentence": "it is cold", "explicit_sentence": "close the window"})" "\n");
  const auto pairs = load_pairwise(dir / "q.jsonl", 0);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].gold_sentence(), "it is cold");
}

TEST(Synthetic, Deterministic) {
  const auto a = make_synthetic_corpus(5, 40, 60), b = make_synthetic_corpus(5, 40, 60);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(a.split[i], b.split[i]);
  const auto c = make_synthetic_corpus(6, 40, 60);
  EXPECT_NE(fingerprint(a.split), fingerprint(c.split));
}

TEST(Synthetic, TemplateProperties) {
  const auto corpus = make_synthetic_corpus(3, 200, 100);
  auto words = [](const std::string& s) {
    std::set<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;) out.insert(w);
    return out;
  };
  auto overlap_template = [&](const std::set<std::string>& a, const std::set<std::string>& b,
                              const SyntheticTemplate& t) {
    int n = 0;
    for (const auto& w : a) n += b.count(w) && t.is_template_token(w) ? 1 : 0;
    return n;
  };
  for (std::size_t i = 0; i < corpus.split.size(); ++i) {
    const auto& s = corpus.split[i];
    const auto& t = corpus.templates[i];
    const auto p = words(s.premise), e = words(s.explicit_entailment), h = words(s.implied_entailment),
               c = words(s.contradiction), n = words(s.neutral);
    // explicit entailment shares the literal words, implied shares only hidden ones
    for (const auto& w : t.literal) {
      EXPECT_TRUE(p.count(w) && e.count(w));
      EXPECT_FALSE(h.count(w));
    }
    for (const auto& w : t.hidden) {
      EXPECT_TRUE(p.count(w) && h.count(w));
      EXPECT_FALSE(e.count(w));
    }
    EXPECT_EQ(overlap_template(p, e, t), 2);
    EXPECT_EQ(overlap_template(p, h, t), 2);
    EXPECT_EQ(overlap_template(p, c, t), 0);
    EXPECT_EQ(overlap_template(p, n, t), 0);
    for (const auto& w : n) EXPECT_FALSE(p.count(w)) << w;
    EXPECT_TRUE(c.count(t.anti_literal[0]) && c.count(t.anti_hidden[0]));
  }
}

TEST(Synthetic, RejectsTinyVocabulary) {
  EXPECT_THROW(make_synthetic_corpus(0, 10, 19), ConfigError);
  EXPECT_THROW(make_synthetic_corpus(0, 0, 50), ConfigError);
}

TEST(Batching, SizesAndCoverage) {
  const auto corpus = make_synthetic_corpus(0, 10, 40);
  const auto batches = batch_iter(corpus.split, 4, 123);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 4u);
  EXPECT_EQ(batches[1].size(), 4u);
  EXPECT_EQ(batches[2].size(), 2u);
  std::set<std::string> ids;
  for (const auto& b : batches) {
    for (const auto& s : b.samples) ids.insert(s.id);
  }
  EXPECT_EQ(ids.size(), 10u);
}

TEST(Batching, LargeSplitBatchCount) {
  const auto corpus = make_synthetic_corpus(0, 32000, 100);
  EXPECT_EQ(batch_iter(corpus.split, 64, 0).size(), 500u);
}

TEST(Batching, SeedDeterminesOrder) {
  const auto corpus = make_synthetic_corpus(0, 30, 40);
  const auto a = batch_iter(corpus.split, 8, 1), b = batch_iter(corpus.split, 8, 1), c = batch_iter(corpus.split, 8, 2);
  EXPECT_EQ(a[0].samples, b[0].samples);
  EXPECT_NE(a[0].samples, c[0].samples);
}

TEST(Batching, RejectsEmptyAndZero) {
  const auto corpus = make_synthetic_corpus(0, 5, 40);
  EXPECT_THROW(batch_iter(corpus.split, 0, 0), ConfigError);
  EXPECT_THROW(batch_iter(DatasetSplit(SplitName::kTrain, {}), 4, 0), ValidationError);
}
