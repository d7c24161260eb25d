#include "diva/simulate.hpp"

#include "diva/error.hpp"

#include <cmath>
#include <random>

namespace diva {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

SimulationParams SimulationParams::uniform(double alpha, double beta, double gamma, double noise,
                                                OutcomeKind kind) {
  SimulationParams p;
  p.alpha = alpha;
  p.beta1 = p.beta2 = beta;
  p.gamma0 = p.gamma1 = gamma;
  p.noise_scale = noise;
  p.outcome_kind = kind;
  return p;
}

void SimulationParams::validate() const {
  if (!(noise_scale >= 0.0)) throw ConfigError("simulation: noise_scale must be nonnegative");
  for (double v : {alpha, beta1, beta2, gamma0, gamma1}) {
    if (!std::isfinite(v)) throw ConfigError("simulation: coefficients must be finite");
  }
}

std::string CovariatePropensity::label_of(const MetaValue& value) const {
  if (binned) {
    if (!std::holds_alternative<double>(value)) throw DataError("propensity: expected a real covariate value");
    return bin_label(bin_index(edges, std::get<double>(value)));
  }
  if (!std::holds_alternative<std::string>(value)) throw DataError("propensity: expected a categorical value");
  return std::get<std::string>(value);
}

const PropensityEntry& CovariatePropensity::lookup(const MetaValue& value) const {
  const std::string label = label_of(value);
  auto it = entries.find(label);
  if (it == entries.end()) throw DataError("propensity: no entry for category '" + label + "'");
  return it->second;
}

double PropensityTable::pi(const Document& doc, const std::string& covariate) const {
  auto it = covariates.find(covariate);
  if (it == covariates.end()) throw DataError("propensity: missing table for covariate '" + covariate + "'");
  return it->second.lookup(doc.meta_at(covariate)).pi;
}

CovariatePropensity estimate_propensity(const Dataset& ds, const std::string& covariate, int bins) {
  CovariatePropensity table;
  std::vector<double> values;
  bool seen = false;
  for (const auto& doc : ds.documents) {
    if (doc.treatment == Treatment::unassigned) throw DataError("estimate_propensity: treatment not assigned");
    const MetaValue& v = doc.meta_at(covariate);
    if (!seen) {
      table.binned = std::holds_alternative<double>(v);
      seen = true;
    }
    if (table.binned != std::holds_alternative<double>(v)) {
      throw DataError("estimate_propensity: covariate '" + covariate + "' mixes real and categorical values");
    }
    if (table.binned) values.push_back(std::get<double>(v));
  }
  if (!seen) throw DataError("estimate_propensity: empty dataset");
  if (table.binned) table.edges = equal_frequency_edges(values, bins);
  for (const auto& doc : ds.documents) {
    auto& e = table.entries[table.label_of(doc.meta_at(covariate))];
    ++e.n;
    if (doc.treated()) ++e.treated;
  }
  for (auto& [label, e] : table.entries) {
    e.pi = static_cast<double>(e.treated) / static_cast<double>(e.n);
    e.flagged = e.n < 2 || e.treated == 0 || e.treated == e.n;
  }
  return table;
}

PropensityTable estimate_propensities(const Dataset& ds, int size_bins) {
  PropensityTable pt;
  pt.covariates["sector"] = estimate_propensity(ds, "sector", size_bins);
  pt.covariates["size"] = estimate_propensity(ds, "size", size_bins);
  return pt;
}

double confound_term(const Document& doc, const SimulationParams& p, const PropensityTable& pt) {
  return p.beta1 * (pt.pi(doc, "sector") - p.gamma0) + p.beta2 * (pt.pi(doc, "size") - p.gamma1);
}

namespace {

int treatment_value(const Document& doc) {
  if (doc.treatment == Treatment::unassigned) throw DataError("simulate: document " + doc.id + " has no treatment");
  return doc.treated() ? 1 : 0;
}

}  // namespace

SimulatedOutcome simulate_volatility(const Document& doc, const SimulationParams& p, const PropensityTable& pt,
                                     Rng& rng) {
  if (p.outcome_kind != OutcomeKind::real) throw ConfigError("simulate_volatility: outcome kind is not volatility");
  const int t = treatment_value(doc);
  const double c = confound_term(doc, p, pt);
  const double eps = p.noise_scale > 0.0 ? std::normal_distribution<double>(0.0, p.noise_scale)(rng) : 0.0;
  SimulatedOutcome out;
  out.y0 = c;
  out.y1 = p.alpha + c;
  out.y = p.alpha * t + c + eps;
  out.ite = p.alpha;
  return out;
}

SimulatedOutcome simulate_movement(const Document& doc, const SimulationParams& p, const PropensityTable& pt,
                                   Rng& rng) {
  if (p.outcome_kind != OutcomeKind::binary) throw ConfigError("simulate_movement: outcome kind is not movement");
  const int t = treatment_value(doc);
  const double c = confound_term(doc, p, pt);
  const double eps = p.noise_scale > 0.0 ? std::normal_distribution<double>(0.0, p.noise_scale)(rng) : 0.0;
  const double prob = sigmoid(p.alpha * t + c + eps);
  SimulatedOutcome out;
  out.y0 = sigmoid(c);
  out.y1 = sigmoid(p.alpha + c);
  out.ite = out.y1 - out.y0;
  out.y = std::bernoulli_distribution(prob)(rng) ? 1.0 : 0.0;
  return out;
}

Dataset simulate_outcomes(const Dataset& ds, const SimulationParams& p, const PropensityTable& pt,
                          std::uint64_t seed) {
  p.validate();
  Dataset out = ds;
  for (std::size_t i = 0; i < out.size(); ++i) {
    Document& doc = out.documents[i];
    Rng rng = derive_stream(seed, StreamTag::simulate, i);
    const SimulatedOutcome s = p.outcome_kind == OutcomeKind::real ? simulate_volatility(doc, p, pt, rng)
                                                                          : simulate_movement(doc, p, pt, rng);
    doc.outcome = Outcome{s.y, s.y0, s.y1, s.ite};
  }
  return out;
}

double true_ate(const Dataset& ds, const std::string& split) {
  const auto idx = ds.select(split);
  if (idx.empty()) throw DataError("true_ate: split '" + split + "' is empty");
  double total = 0.0;
  for (std::size_t i : idx) {
    const auto& ite = ds.documents[i].outcome.ite;
    if (!ite) throw DataError("true_ate: document " + ds.documents[i].id + " has no ite");
    total += *ite;
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace diva
