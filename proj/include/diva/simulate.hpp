#pragma once

#include "diva/corpus.hpp"
#include "diva/rng.hpp"
#include "diva/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace diva {

/// Coefficients of the semi-synthetic outcome models:
///   volatility  y = alpha*T + beta1*(pi(sector) - gamma0) + beta2*(pi(size) - gamma1) + eps
///   movement    y ~ Bernoulli(sigmoid(same linear predictor))
/// with eps ~ Normal(0, noise_scale^2).
struct SimulationParams {
  double alpha = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double gamma0 = 0.5;
  double gamma1 = 0.5;
  double noise_scale = 1.0;
  OutcomeKind outcome_kind = OutcomeKind::real;  // real = volatility, binary = movement

  /// One beta and one gamma shared by every covariate.
  static SimulationParams uniform(double alpha, double beta, double gamma, double noise, OutcomeKind kind);
  void validate() const;
};

struct PropensityEntry {
  double pi = 0.0;
  std::size_t n = 0;
  std::size_t treated = 0;
  bool flagged = false;  // fewer than 2 documents, or pi in {0, 1}
};

/// Empirical propensity per category (or per equal-frequency bin for a real
/// covariate).
struct CovariatePropensity {
  bool binned = false;
  std::vector<double> edges;  // bin edges when binned
  std::map<std::string, PropensityEntry> entries;

  std::string label_of(const MetaValue& value) const;
  const PropensityEntry& lookup(const MetaValue& value) const;
};

class PropensityTable {
 public:
  std::map<std::string, CovariatePropensity> covariates;

  double pi(const Document& doc, const std::string& covariate) const;
};

/// Empirical P(T=1 | covariate); real covariates use `bins` equal-frequency bins.
CovariatePropensity estimate_propensity(const Dataset& ds, const std::string& covariate, int bins = 4);

/// Propensities for the two covariates the outcome models use (sector, size).
PropensityTable estimate_propensities(const Dataset& ds, int size_bins = 4);

struct SimulatedOutcome {
  double y = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
  double ite = 0.0;
};

/// Noiseless confounding term beta1*(pi_s - gamma0) + beta2*(pi_z - gamma1).
double confound_term(const Document& doc, const SimulationParams& p, const PropensityTable& pt);

SimulatedOutcome simulate_volatility(const Document& doc, const SimulationParams& p, const PropensityTable& pt,
                                     Rng& rng);
SimulatedOutcome simulate_movement(const Document& doc, const SimulationParams& p, const PropensityTable& pt,
                                   Rng& rng);

/// Simulates every document with a per-document stream derived from
/// (seed, document position); the result is independent of evaluation order.
Dataset simulate_outcomes(const Dataset& ds, const SimulationParams& p, const PropensityTable& pt,
                          std::uint64_t seed);

/// Mean ground-truth ITE over a split ("all" for every document).
double true_ate(const Dataset& ds, const std::string& split = "test");

}  // namespace diva
