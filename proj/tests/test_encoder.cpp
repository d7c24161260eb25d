#include "support.hpp"

#include "diva/encoder.hpp"
#include "diva/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace diva;
using diva::testing::check_gradients;
using diva::testing::leaves_of;

namespace {

Encoder small_encoder(int vocab = 20, int dim = 8, int depth = 2, std::uint64_t seed = 1) {
  Rng rng(seed);
  return Encoder(EncoderConfig{vocab, dim, depth, 64}, rng);
}

}  // namespace

TEST(Encode, ZeroParametersGiveZeroVector) {
  Encoder enc = small_encoder();
  for (Parameter* p : enc.parameters()) p->mutable_value().setZero();
  const std::vector<int> tokens = {4, 5, 6, 7};
  EXPECT_TRUE(enc.encode(tokens).isZero(0.0));
}

TEST(Encode, DeterministicAndBatchConsistent) {
  const Encoder enc = small_encoder();
  const std::vector<std::vector<int>> docs = {{4, 5, 6}, {7, 8, 9, 10, 11}, {12}};
  const ag::Matrix batch = enc.encode_batch(docs);
  ASSERT_EQ(batch.rows(), 3);
  ASSERT_EQ(batch.cols(), 8);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const ag::Matrix single = enc.encode(docs[i]);
    EXPECT_TRUE(single.isApprox(enc.encode(docs[i]), 0.0));
    EXPECT_LE((batch.row(static_cast<ag::Index>(i)) - single.row(0)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Encode, PadSuffixIgnored) {
  const Encoder enc = small_encoder();
  const std::vector<int> plain = {4, 9, 13};
  const std::vector<int> padded = {4, 9, 13, Vocabulary::kPad, Vocabulary::kPad};
  EXPECT_LE((enc.encode(plain) - enc.encode(padded)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Encode, OutOfRangeTokenIsAnError) {
  const Encoder enc = small_encoder();
  const std::vector<int> bad = {4, 20};
  EXPECT_THROW(enc.encode(bad), DataError);
}

TEST(Encode, TruncatesFromTheRight) {
  Rng rng(2);
  const Encoder enc(EncoderConfig{20, 4, 1, 3}, rng);
  const std::vector<int> longer = {4, 5, 6, 7, 8};
  const std::vector<int> head = {4, 5, 6};
  EXPECT_LE((enc.encode(longer) - enc.encode(head)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MaskTokens, FifteenOfHundred) {
  std::vector<int> tokens(100);
  for (int i = 0; i < 100; ++i) tokens[static_cast<std::size_t>(i)] = 3 + i % 7;
  Rng rng(5);
  const MaskedTokens m = mask_tokens(tokens, 0.15, rng);
  EXPECT_EQ(m.masked_count(), 15u);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (m.labels[i] == MaskedTokens::kIgnore) {
      EXPECT_EQ(m.tokens[i], tokens[i]);
    } else {
      EXPECT_EQ(m.tokens[i], Vocabulary::kMask);
      EXPECT_EQ(m.labels[i], tokens[i]);
    }
  }
}

TEST(MaskTokens, MinimumOneAndDeterministic) {
  const std::vector<int> three = {5, 6, 7};
  Rng a(9), b(9);
  const MaskedTokens ma = mask_tokens(three, 0.15, a);
  const MaskedTokens mb = mask_tokens(three, 0.15, b);
  EXPECT_EQ(ma.masked_count(), 1u);
  EXPECT_EQ(ma.tokens, mb.tokens);
  EXPECT_EQ(ma.labels, mb.labels);
  Rng c(1);
  EXPECT_THROW(mask_tokens(std::vector<int>{}, 0.15, c), DataError);
  EXPECT_THROW(mask_tokens(three, 1.5, c), ConfigError);
}

TEST(MlmLoss, UniformLogitsGiveLogVocab) {
  Encoder enc = small_encoder(1000, 4, 1);
  enc.mlm_w.mutable_value().setZero();
  enc.mlm_b.mutable_value().setZero();
  MaskedTokens m;
  m.tokens = {Vocabulary::kMask, 17, Vocabulary::kMask};
  m.labels = {400, MaskedTokens::kIgnore, 999};
  EXPECT_NEAR(enc.mlm_loss(m).item(), std::log(1000.0), 1e-12);
  EXPECT_NEAR(std::log(1000.0), 6.9078, 1e-4);
}

TEST(MlmLoss, ConfidentCorrectLogitsGiveZero) {
  Encoder enc = small_encoder(30, 4, 1);
  enc.mlm_w.mutable_value().setZero();
  enc.mlm_b.mutable_value().setZero();
  enc.mlm_b.mutable_value()(0, 11) = 1000.0;
  MaskedTokens m;
  m.tokens = {Vocabulary::kMask, 5};
  m.labels = {11, MaskedTokens::kIgnore};
  EXPECT_NEAR(enc.mlm_loss(m).item(), 0.0, 1e-12);
}

TEST(MlmLoss, NoMaskedPositionIsAnError) {
  const Encoder enc = small_encoder();
  MaskedTokens m;
  m.tokens = {4, 5};
  m.labels = {MaskedTokens::kIgnore, MaskedTokens::kIgnore};
  EXPECT_THROW(enc.mlm_loss(m), DataError);
}

TEST(MlmLoss, LoweringCorrectLogitNeverHelps) {
  Encoder enc = small_encoder(25, 6, 1);
  MaskedTokens m;
  m.tokens = {Vocabulary::kMask, 8, 9};
  m.labels = {14, MaskedTokens::kIgnore, MaskedTokens::kIgnore};
  double prev = enc.mlm_loss(m).item();
  for (int step = 0; step < 10; ++step) {
    enc.mlm_b.mutable_value()(0, 14) -= 0.5;
    const double now = enc.mlm_loss(m).item();
    EXPECT_GE(now, prev);
    prev = now;
  }
}

TEST(MlmLoss, FiniteDifferenceTwoTokenToy) {
  Encoder enc = small_encoder(10, 5, 1, 3);
  MaskedTokens m;
  m.tokens = {Vocabulary::kMask, 6};
  m.labels = {7, MaskedTokens::kIgnore};
  const auto r = check_gradients([&] { return enc.mlm_loss(m); }, leaves_of(enc.parameters()));
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Dropout, InactiveInEvalAndScaledInTraining) {
  const Encoder enc = small_encoder();
  TokenBatch batch;
  batch.add(std::vector<int>{4, 5, 6}, 64, 20);
  const ag::Matrix eval = enc.forward(batch).pooled.value();
  EXPECT_TRUE(eval.isApprox(enc.encode(std::vector<int>{4, 5, 6}), 1e-14));
  Rng rng(3);
  const Dropout d{0.5, &rng};
  const ag::Matrix mask = d.mask(200, 50);
  std::set<double> values(mask.data(), mask.data() + mask.size());
  EXPECT_EQ(values, (std::set<double>{0.0, 2.0}));
  EXPECT_NEAR(mask.mean(), 1.0, 0.05);
}

TEST(Vocabulary, RoundTripAndSpecials) {
  const std::vector<std::string> texts = {"b a a", "c a b"};
  const Vocabulary v = Vocabulary::build(texts);
  EXPECT_EQ(v.token(Vocabulary::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocabulary::kMask), "[MASK]");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "[UNK]");
  EXPECT_EQ(v.token(3), "a");
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  const auto p = std::filesystem::temp_directory_path() / "diva_test_vocab.txt";
  v.save(p);
  const Vocabulary back = Vocabulary::load(p);
  EXPECT_EQ(back.tokens(), v.tokens());
}
