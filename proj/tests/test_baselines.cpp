#include "diva/baselines.hpp"
#include "diva/error.hpp"
#include "diva/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace diva;

namespace {

Document observed(const std::string& id, bool treated, double y) {
  Document d;
  d.id = id;
  d.tokens = {3, 4};
  d.treatment = treated ? Treatment::treated : Treatment::control;
  d.outcome.y = y;
  return d;
}

Dataset simulated(std::uint64_t seed, double beta, double noise) {
  SyntheticCorpusSpec spec;
  spec.n_docs = 450;
  spec.vocab_size = 120;
  spec.doc_length = 24;
  const Dataset base = split_dataset(assign_treatment(generate_synthetic_corpus(spec, seed), 150, 150), SplitRatio{}, seed);
  const PropensityTable pt = estimate_propensities(base, 4);
  return simulate_outcomes(base, SimulationParams::uniform(1.0, beta, 0.5, noise, OutcomeKind::real), pt, seed);
}

TrainConfig quick(int epochs, std::uint64_t seed) {
  TrainConfig c = TrainConfig::desk();
  c.epochs = epochs;
  c.batch_size = 32;
  c.dim = 12;
  c.latent_dim = 4;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(NaiveAte, DifferenceInMeans) {
  Dataset ds;
  ds.documents = {observed("a", true, 2.0), observed("b", true, 2.0), observed("c", false, 1.0),
                  observed("d", false, 1.0)};
  ds.splits["test"] = {0, 2};
  EXPECT_DOUBLE_EQ(naive_ate(ds, "all"), 1.0);
  EXPECT_DOUBLE_EQ(naive_ate(ds, "test"), 1.0);
  ds.documents[1].outcome.y = 4.0;
  EXPECT_DOUBLE_EQ(naive_ate(ds, "all"), 2.0);
  ds.splits["treated_only"] = {0, 1};
  EXPECT_THROW(naive_ate(ds, "treated_only"), DataError);
  ds.documents[2].outcome.y.reset();
  EXPECT_THROW(naive_ate(ds, "all"), DataError);
}

TEST(NaiveAte, BiasedUnderConfounding) {
  const Dataset ds = simulated(1, 1.0, 0.0);
  EXPECT_GT(std::abs(naive_ate(ds, "all") - true_ate(ds, "all")), 0.1);
}

TEST(Tarnet, UntrainedHeadsPredictTheirBiases) {
  const Dataset ds = simulated(2, 1.0, 1.0);
  const TarnetResult r = tarnet_fit_predict(ds, quick(0, 2));
  ASSERT_EQ(r.estimate.ite_hat.size(), ds.split("test").size());
  for (double v : r.estimate.ite_hat) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.estimate.model_id, "tarnet");
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(Tarnet, RecoversEffectWithoutConfoundingOrNoise) {
  const Dataset ds = simulated(3, 0.0, 0.0);
  const TarnetResult r = tarnet_fit_predict(ds, quick(40, 3));
  ASSERT_FALSE(r.diagnostic.has_value());
  EXPECT_NEAR(r.estimate.ate_hat, 1.0, 0.1);
}

TEST(Tarnet, RequiresTrainAndDevSplits) {
  Dataset ds = simulated(4, 1.0, 1.0);
  ds.splits.erase("dev");
  EXPECT_THROW(tarnet_fit_predict(ds, quick(1, 4)), DataError);
}
