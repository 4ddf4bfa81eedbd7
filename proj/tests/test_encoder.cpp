#include <gtest/gtest.h>

#include <filesystem>

#include "dualcse/corpus.hpp"
#include "dualcse/encoder.hpp"

using namespace dualcse;
namespace fs = std::filesystem;

namespace {

EncoderSpec small_spec(Architecture arch, int hidden = 16, int max_len = 32) {
  EncoderSpec s;
  s.architecture = arch;
  s.embedding_dim = hidden;
  s.max_sequence_length = max_len;
  s.toy = ToyConfig{1, 2, hidden, 2 * hidden};
  return s;
}

const SyntheticCorpus& corpus() {
  static const SyntheticCorpus c = make_synthetic_corpus(0, 100, 60);
  return c;
}

Encoder make(Architecture arch, std::uint64_t seed = 0, int max_len = 32) {
  return Encoder::create_toy(small_spec(arch, 16, max_len), build_vocabulary(corpus().split), seed);
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dualcse_encoder_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Encoder, CrossInputLayout) {
  const Encoder enc = make(Architecture::kCross);
  const auto& v = enc.vocab();
  const auto in = enc.tokenize("w1 w2 w3", View::kExplicit);
  ASSERT_EQ(in.ids.size(), 6u);
  EXPECT_EQ(in.ids.front(), v.cls_id());
  EXPECT_EQ(in.ids[4], v.sep_id());
  EXPECT_EQ(in.ids.back(), v.id("explicit"));
  EXPECT_EQ(enc.tokenize("w1 w2 w3", View::kImplicit).ids.back(), v.id("implicit"));
  EXPECT_FALSE(in.truncated);
}

TEST(Encoder, BiInputLayout) {
  const Encoder enc = make(Architecture::kBi);
  const auto in = enc.tokenize("w1 w2", View::kImplicit);
  ASSERT_EQ(in.ids.size(), 4u);
  EXPECT_EQ(in.ids.front(), enc.vocab().cls_id());
  EXPECT_EQ(in.ids.back(), enc.vocab().sep_id());
  EXPECT_EQ(enc.tower_prefix(View::kExplicit), "explicit.");
  EXPECT_EQ(enc.tower_prefix(View::kImplicit), "implicit.");
}

TEST(Encoder, TruncationKeepsSuffix) {
  const Encoder enc = make(Architecture::kCross, 0, 8);
  const auto in = enc.tokenize("w1 w2 w3 w4 w5 w6 w7 w8 w9", View::kImplicit);
  ASSERT_EQ(in.ids.size(), 8u);
  EXPECT_TRUE(in.truncated);
  EXPECT_EQ(in.ids[0], enc.vocab().cls_id());
  EXPECT_EQ(in.ids[6], enc.vocab().sep_id());
  EXPECT_EQ(in.ids[7], enc.vocab().id("implicit"));
  EXPECT_EQ(in.ids[1], enc.vocab().id("w1"));
  EXPECT_TRUE(enc.encode("w1 w2 w3 w4 w5 w6 w7 w8 w9", View::kImplicit).truncated);
}

TEST(Encoder, UnknownWordsMapToUnk) {
  const Encoder enc = make(Architecture::kCross);
  EXPECT_EQ(enc.tokenize("zebra", View::kExplicit).ids[1], enc.vocab().unk_id());
}

TEST(Encoder, DeterministicForSeed) {
  const Encoder a = make(Architecture::kCross, 4), b = make(Architecture::kCross, 4), c = make(Architecture::kCross, 5);
  const std::string s = corpus().split[0].premise;
  EXPECT_EQ(a.encode(s, View::kExplicit).embedding, b.encode(s, View::kExplicit).embedding);
  EXPECT_NE(a.encode(s, View::kExplicit).embedding, c.encode(s, View::kExplicit).embedding);
}

TEST(Encoder, PoolClsTakesFirstRow) {
  const Encoder enc = make(Architecture::kCross);
  const std::string s = corpus().split[1].premise;
  const auto h = enc.hidden_states(s, View::kImplicit);
  EXPECT_EQ(pool_cls(h), Vector(h.row(0).transpose()));
  EXPECT_EQ(enc.encode(s, View::kImplicit).embedding, pool_cls(h));
  EXPECT_EQ(enc.encode(s, View::kImplicit).embedding.size(), 16);
}

TEST(Encoder, CrossViewsDifferForEverySentence) {
  const Encoder enc = make(Architecture::kCross);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto d = enc.encode_dual(corpus().split[i].premise);
    EXPECT_GT((d.r - d.u).norm(), 1e-8) << i;
  }
}

TEST(Encoder, CrossViewsCoincideWithTiedViewEmbeddings) {
  Encoder enc = make(Architecture::kCross);
  auto& table = enc.params().at("shared.embeddings.token").value;
  table.row(enc.vocab().id("implicit")) = table.row(enc.vocab().id("explicit"));
  const auto d = enc.encode_dual(corpus().split[3].premise);
  EXPECT_EQ(d.r, d.u);
}

TEST(Encoder, BiTowersStartIdentical) {
  const Encoder enc = make(Architecture::kBi);
  const auto d = enc.encode_dual(corpus().split[2].premise);
  EXPECT_EQ(d.r, d.u);
}

TEST(Encoder, BiTowersAreIsolated) {
  Encoder enc = make(Architecture::kBi);
  const std::string s = corpus().split[5].premise;
  const auto before = enc.encode_dual(s);
  enc.params().at("implicit.layer0.ffn.in.weight").value.array() += 0.5;
  const auto after = enc.encode_dual(s);
  EXPECT_EQ(before.r, after.r);
  EXPECT_NE(before.u, after.u);
}

TEST(Encoder, ExplicitForwardLeavesImplicitGradientsZero) {
  Encoder enc = make(Architecture::kBi);
  enc.zero_grad();
  ad::Tape tape;
  ad::Var r = enc.forward(tape, corpus().split[0].premise, View::kExplicit);
  tape.seed(r, ad::Matrix::Ones(1, enc.dim()));
  tape.backward();
  double implicit_norm = 0.0, explicit_norm = 0.0;
  for (const auto& [name, p] : enc.params()) {
    (name.rfind("implicit.", 0) == 0 ? implicit_norm : explicit_norm) += p.grad.squaredNorm();
  }
  EXPECT_EQ(implicit_norm, 0.0);
  EXPECT_GT(explicit_norm, 0.0);
}

TEST(Encoder, CheckpointRoundTripIsBitExact) {
  for (Architecture arch : {Architecture::kCross, Architecture::kBi}) {
    const Encoder enc = make(arch, 9);
    const auto dir = temp_dir("roundtrip");
    enc.save(dir);
    const Encoder back = Encoder::load(dir, enc.spec());
    EXPECT_EQ(back.spec(), enc.spec());
    EXPECT_EQ(back.vocab(), enc.vocab());
    ASSERT_EQ(back.params().size(), enc.params().size());
    for (const auto& [name, p] : enc.params()) EXPECT_EQ(back.params().at(name).value, p.value) << name;
    const std::string s = corpus().split[7].implied_entailment;
    EXPECT_EQ(back.encode(s, View::kImplicit).embedding, enc.encode(s, View::kImplicit).embedding);
  }
}

TEST(Encoder, CorruptParamsAreDetected) {
  const Encoder enc = make(Architecture::kCross);
  const auto dir = temp_dir("corrupt");
  enc.save(dir);
  std::string bytes = read_file(dir / "params.bin");
  bytes[bytes.size() / 2] ^= 0x5a;
  write_file(dir / "params.bin", bytes);
  EXPECT_THROW(Encoder::load(dir), CheckpointError);
  write_file(dir / "params.bin", bytes.substr(0, 10));
  EXPECT_THROW(Encoder::load(dir), CheckpointError);
  EXPECT_THROW(Encoder::load(temp_dir("absent")), CheckpointError);
}

TEST(Encoder, SpecMismatchOnLoad) {
  const Encoder enc = make(Architecture::kCross);
  const auto dir = temp_dir("specmismatch");
  enc.save(dir);
  EXPECT_THROW(Encoder::load(dir, small_spec(Architecture::kBi)), ConfigError);
}

TEST(Encoder, ExternalBackboneDimensionMismatch) {
  const auto big = Encoder::create_toy(small_spec(Architecture::kCross, 48), build_vocabulary(corpus().split), 0);
  const auto dir = temp_dir("backbone48");
  save_backbone(big.export_backbone(), dir);
  EXPECT_THROW(load_external_backbone(dir.string(), 32), ConfigError);
  EncoderSpec spec = small_spec(Architecture::kCross, 32);
  spec.backbone = BackboneKind::kExternal;
  spec.external_locator = dir.string();
  EXPECT_THROW(Encoder::create(spec, build_vocabulary(corpus().split), 0), ConfigError);
}

TEST(Encoder, ExternalBackboneInitializesBothTowers) {
  const Encoder cross = make(Architecture::kCross, 3);
  const auto dir = temp_dir("backbone16");
  save_backbone(cross.export_backbone(), dir);
  EncoderSpec spec = small_spec(Architecture::kBi);
  spec.backbone = BackboneKind::kExternal;
  spec.external_locator = dir.string();
  const Encoder bi = Encoder::create(spec, Vocabulary(), 0);
  for (const auto& [name, p] : cross.params()) {
    const std::string tail = name.substr(std::string("shared.").size());
    EXPECT_EQ(bi.params().at("explicit." + tail).value, p.value);
    EXPECT_EQ(bi.params().at("implicit." + tail).value, p.value);
  }
}

TEST(Encoder, ExternalLocatorResolvesAgainstHome) {
  const Encoder cross = make(Architecture::kCross, 3);
  const auto home = temp_dir("home");
  save_backbone(cross.export_backbone(), home / "models" / "tiny");
  ::setenv("DUALCSE_HOME", home.c_str(), 1);
  EXPECT_NO_THROW(load_external_backbone("models/tiny", 16));
  ::unsetenv("DUALCSE_HOME");
  EXPECT_THROW(load_external_backbone("models/definitely-missing"), CheckpointError);
}

TEST(Encoder, SpecValidation) {
  EncoderSpec s = small_spec(Architecture::kCross);
  s.embedding_dim = 24;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec(Architecture::kCross);
  s.max_sequence_length = 2;
  EXPECT_THROW(s.validate(), ConfigError);
}
