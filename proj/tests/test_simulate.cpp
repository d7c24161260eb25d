#include "diva/error.hpp"
#include "diva/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace diva;

namespace {

Document doc(const std::string& id, const std::string& sector, double size, bool treated) {
  Document d;
  d.id = id;
  d.tokens = {3};
  d.meta["sector"] = sector;
  d.meta["size"] = size;
  d.treatment = treated ? Treatment::treated : Treatment::control;
  return d;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Two sectors with pi = 0.5 each and sizes whose bins have pi = 0.5.
Dataset half_and_half() {
  Dataset ds;
  for (int i = 0; i < 8; ++i) {
    ds.documents.push_back(doc("d" + std::to_string(i), i < 4 ? "A" : "B", 1.0 + i / 2, i % 2 == 0));
  }
  return ds;
}

}  // namespace

TEST(Propensity, CategoricalCounting) {
  Dataset ds;
  for (int i = 0; i < 10; ++i) ds.documents.push_back(doc("e" + std::to_string(i), "Energy", 1.0, i < 6));
  for (int i = 0; i < 3; ++i) ds.documents.push_back(doc("u" + std::to_string(i), "Utilities", 1.0, true));
  const CovariatePropensity p = estimate_propensity(ds, "sector");
  EXPECT_DOUBLE_EQ(p.entries.at("Energy").pi, 0.6);
  EXPECT_FALSE(p.entries.at("Energy").flagged);
  EXPECT_DOUBLE_EQ(p.entries.at("Utilities").pi, 1.0);
  EXPECT_TRUE(p.entries.at("Utilities").flagged);
}

TEST(Propensity, RealCovariateQuartiles) {
  Dataset ds;
  for (int i = 0; i < 100; ++i) ds.documents.push_back(doc("s" + std::to_string(i), "A", 1.0 + i, i % 3 == 0));
  const CovariatePropensity p = estimate_propensity(ds, "size", 4);
  EXPECT_TRUE(p.binned);
  ASSERT_EQ(p.entries.size(), 4u);
  for (const auto& [_, e] : p.entries) EXPECT_EQ(e.n, 25u);
}

TEST(Propensity, SmallCategoryFlagged) {
  Dataset ds = half_and_half();
  ds.documents.push_back(doc("lonely", "C", 1.0, true));
  EXPECT_TRUE(estimate_propensity(ds, "sector").entries.at("C").flagged);
}

TEST(SimulateVolatility, OffsetsCancel) {
  const Dataset ds = half_and_half();
  const PropensityTable pt = estimate_propensities(ds, 4);
  SimulationParams p = SimulationParams::uniform(1.0, 1.0, 0.5, 0.0, OutcomeKind::real);
  Rng rng(1);
  for (const auto& d : ds.documents) {
    ASSERT_DOUBLE_EQ(pt.pi(d, "sector"), 0.5);
    ASSERT_DOUBLE_EQ(pt.pi(d, "size"), 0.5);
    const SimulatedOutcome o = simulate_volatility(d, p, pt, rng);
    EXPECT_DOUBLE_EQ(o.y, d.treated() ? 1.0 : 0.0);
    EXPECT_DOUBLE_EQ(o.ite, 1.0);
  }
}

TEST(SimulateVolatility, DefaultSettingIsLinearPlusUnitNoise) {
  const Dataset ds = half_and_half();
  const PropensityTable pt = estimate_propensities(ds, 4);
  const SimulationParams p = SimulationParams::uniform(1.0, 1.0, 0.5, 1.0, OutcomeKind::real);
  EXPECT_EQ(p.beta1, 1.0);
  EXPECT_EQ(p.beta2, 1.0);
  EXPECT_EQ(p.gamma0, 0.5);
  EXPECT_EQ(p.gamma1, 0.5);
  const Document& d = ds.documents[0];
  Rng a(5), b(5);
  const SimulatedOutcome o = simulate_volatility(d, p, pt, a);
  const double eps = std::normal_distribution<double>(0.0, 1.0)(b);
  EXPECT_DOUBLE_EQ(o.y, 1.0 + (pt.pi(d, "sector") - 0.5) + (pt.pi(d, "size") - 0.5) + eps);
  EXPECT_DOUBLE_EQ(o.y1 - o.y0, 1.0);
}

TEST(SimulateVolatility, MissingPropensityIsAnError) {
  const Dataset ds = half_and_half();
  const PropensityTable pt = estimate_propensities(ds, 4);
  Document stranger = doc("x", "Unknown", 1.0, true);
  Rng rng(1);
  EXPECT_THROW(simulate_volatility(stranger, SimulationParams{}, pt, rng), DataError);
}

TEST(SimulateMovement, SigmoidDifference) {
  const Dataset ds = half_and_half();
  const PropensityTable pt = estimate_propensities(ds, 4);
  SimulationParams p = SimulationParams::uniform(1.0, 1.0, 0.5, 0.0, OutcomeKind::binary);
  Rng rng(2);
  const SimulatedOutcome o = simulate_movement(ds.documents[0], p, pt, rng);
  EXPECT_NEAR(o.ite, 0.23106, 1e-5);
  EXPECT_DOUBLE_EQ(o.ite, sigmoid(1.0) - sigmoid(0.0));
  EXPECT_TRUE(o.y == 0.0 || o.y == 1.0);
}

TEST(SimulateMovement, NullEffectEverywhere) {
  const Dataset ds = half_and_half();
  const PropensityTable pt = estimate_propensities(ds, 4);
  const SimulationParams p = SimulationParams::uniform(0.0, 3.0, 0.2, 1.0, OutcomeKind::binary);
  const Dataset out = simulate_outcomes(ds, p, pt, 8);
  for (const auto& d : out.documents) EXPECT_EQ(*d.outcome.ite, 0.0);
}

TEST(SimulateMovement, MonteCarloRate) {
  // Confound term 0 and alpha = 1 give sigma = 0.7311 for treated documents.
  const Dataset ds = half_and_half();
  const PropensityTable pt = estimate_propensities(ds, 4);
  const SimulationParams p = SimulationParams::uniform(1.0, 1.0, 0.5, 0.0, OutcomeKind::binary);
  Rng rng(17);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += simulate_movement(ds.documents[0], p, pt, rng).y;
  EXPECT_NEAR(sum / 10000.0, 0.7311, 0.02);
}

TEST(SimulateOutcomes, PointwiseIdentitiesAndDeterminism) {
  SyntheticCorpusSpec spec;
  spec.n_docs = 600;
  const Dataset base = split_dataset(assign_treatment(generate_synthetic_corpus(spec, 2), 200, 200), SplitRatio{}, 2);
  const PropensityTable pt = estimate_propensities(base, 4);
  for (OutcomeKind kind : {OutcomeKind::real, OutcomeKind::binary}) {
    const SimulationParams p = SimulationParams::uniform(-0.7, 2.0, 0.3, 1.0, kind);
    const Dataset a = simulate_outcomes(base, p, pt, 4);
    const Dataset b = simulate_outcomes(base, p, pt, 4);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Document& d = a.documents[i];
      EXPECT_EQ(*d.outcome.y, *b.documents[i].outcome.y);
      const double c = confound_term(d, p, pt);
      if (kind == OutcomeKind::real) {
        EXPECT_EQ(*d.outcome.ite, -0.7);
      } else {
        EXPECT_NEAR(*d.outcome.ite, sigmoid(c - 0.7) - sigmoid(c), 1e-12);
        EXPECT_LT(*d.outcome.ite, 0.0);
      }
      sum += *d.outcome.ite;
    }
    EXPECT_NEAR(true_ate(a, "all"), sum / static_cast<double>(a.size()), 1e-12);
  }
}

TEST(SimulateOutcomes, NoConfoundingNoNoiseMakesNaiveExact) {
  const Dataset ds = half_and_half();
  const PropensityTable pt = estimate_propensities(ds, 4);
  SimulationParams p = SimulationParams::uniform(2.5, 0.0, 0.5, 0.0, OutcomeKind::real);
  const Dataset out = simulate_outcomes(ds, p, pt, 1);
  for (const auto& d : out.documents) EXPECT_EQ(*d.outcome.y, d.treated() ? 2.5 : 0.0);
}

TEST(TrueAte, MeanOfIte) {
  Dataset ds;
  ds.documents.push_back(doc("a", "A", 1, true));
  ds.documents.push_back(doc("b", "A", 1, false));
  ds.documents[0].outcome.ite = 0.1;
  ds.documents[1].outcome.ite = 0.3;
  EXPECT_DOUBLE_EQ(true_ate(ds, "all"), 0.2);
  ds.documents[1].outcome.ite.reset();
  EXPECT_THROW(true_ate(ds, "all"), DataError);
}

TEST(SimulationParams, NegativeNoiseRejected) {
  SimulationParams p;
  p.noise_scale = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
}
