#include "diva/baselines.hpp"
#include "diva/estimator.hpp"
#include "diva/experiment.hpp"
#include "diva/metrics.hpp"
#include "diva/simulate.hpp"
#include "diva/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using namespace diva;
namespace fs = std::filesystem;

SplitRatio parse_ratio(const std::string& text) {
  SplitRatio r;
  char c1 = 0;
  char c2 = 0;
  std::istringstream in(text);
  if (!(in >> r.train >> c1 >> r.dev >> c2 >> r.test) || c1 != ':' || c2 != ':') {
    throw ConfigError("split ratio must look like 8:1:6");
  }
  return r;
}

struct PrepareFlags {
  int k_top = 0;
  int k_bottom = 0;
  std::string ratio = "8:1:6";
  std::uint64_t split_seed = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--k-top", k_top, "Treat the k highest-scoring documents");
    cmd->add_option("--k-bottom", k_bottom, "Use the k lowest-scoring documents as controls");
    cmd->add_option("--split", ratio, "train:dev:test ratio")->capture_default_str();
    cmd->add_option("--split-seed", split_seed, "Seed for the stratified split")->capture_default_str();
  }

  Dataset apply(Dataset ds) const {
    if (k_top == 0 && k_bottom == 0) return ds;
    ds = assign_treatment(ds, k_top, k_bottom);
    return split_dataset(ds, parse_ratio(ratio), split_seed);
  }
};

void print_summary(const Dataset& ds) {
  std::size_t treated = 0;
  std::size_t control = 0;
  for (const auto& d : ds.documents) {
    treated += d.treatment == Treatment::treated;
    control += d.treatment == Treatment::control;
  }
  std::cout << "documents " << ds.size() << " vocabulary " << ds.vocabulary.size() << " treated " << treated
            << " control " << control;
  for (const char* s : kSplitNames) {
    if (ds.has_split(s)) std::cout << " " << s << " " << ds.split(s).size();
  }
  std::cout << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct TrainFlags {
  std::string config;
  std::string profile;
  std::optional<double> alpha, beta, gamma, eta, lambda;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::string outcome;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "Flat JSON training config");
    cmd->add_option("--profile", profile, "full or desk");
    cmd->add_option("--alpha", alpha, "Treatment loss weight");
    cmd->add_option("--beta", beta, "Outcome loss weight");
    cmd->add_option("--gamma", gamma, "Orthogonality loss weight");
    cmd->add_option("--eta", eta, "MMD loss weight");
    cmd->add_option("--lambda", lambda, "MLM loss weight");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--seed", seed, "Training seed");
    cmd->add_option("--outcome", outcome, "vol or mov");
  }

  TrainConfig build() const {
    nlohmann::json j = config.empty() ? nlohmann::json::object() : read_json(config);
    if (!profile.empty()) j["profile"] = profile;
    if (alpha) j["alpha"] = *alpha;
    if (beta) j["beta"] = *beta;
    if (gamma) j["gamma"] = *gamma;
    if (eta) j["eta"] = *eta;
    if (lambda) j["lambda"] = *lambda;
    if (epochs) j["epochs"] = *epochs;
    if (seed) j["seed"] = *seed;
    if (!outcome.empty()) j["outcome"] = outcome;
    return train_config_from_json(j);
  }
};

void print_effects(const Dataset& ds, const EffectEstimate& est) {
  std::cout << std::setprecision(6) << "ate_hat " << est.ate_hat << " n " << est.ids.size();
  std::map<std::string, double> truth;
  for (const auto& d : ds.documents) {
    if (d.outcome.ite) truth[d.id] = *d.outcome.ite;
  }
  std::vector<double> tau;
  for (const auto& id : est.ids) {
    const auto it = truth.find(id);
    if (it == truth.end()) {
      std::cout << "\n";
      return;
    }
    tau.push_back(it->second);
  }
  const MetricReport m = evaluate_effects(tau, est.ite_hat);
  std::cout << " delta_ate " << m.ate_error << " pehe_sqrt " << m.pehe_sqrt << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treatment-effect estimation from text with disentangled latents"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a JSONL corpus, optionally assign treatment and split");
  std::string ingest_in, ingest_out, ingest_vocab;
  PrepareFlags ingest_prep;
  ingest->add_option("input", ingest_in, "JSONL corpus")->required();
  ingest->add_option("--out", ingest_out, "Write the processed corpus here");
  ingest->add_option("--vocab-out", ingest_vocab, "Write the vocabulary here");
  ingest_prep.add(ingest);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with known latent structure");
  std::string synth_spec, synth_out;
  std::uint64_t synth_seed = 0;
  PrepareFlags synth_prep;
  synth->add_option("--spec", synth_spec, "Generator spec JSON (defaults when omitted)");
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output JSONL")->required();
  synth_prep.add(synth);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulate outcomes with a known treatment effect");
  std::string sim_in, sim_out, sim_outcome = "vol";
  double sim_alpha = 1.0, sim_beta = 1.0, sim_gamma = 0.5, sim_noise = 1.0;
  std::uint64_t sim_seed = 0;
  int sim_bins = 4;
  simulate->add_option("input", sim_in, "JSONL corpus with treatment assigned")->required();
  simulate->add_option("--out", sim_out, "Output JSONL")->required();
  simulate->add_option("--outcome", sim_outcome, "vol or mov")->capture_default_str();
  simulate->add_option("--alpha", sim_alpha, "True treatment effect")->capture_default_str();
  simulate->add_option("--beta", sim_beta, "Confounding strength")->capture_default_str();
  simulate->add_option("--gamma", sim_gamma, "Propensity offset")->capture_default_str();
  simulate->add_option("--noise", sim_noise, "Noise scale")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Simulation seed")->capture_default_str();
  simulate->add_option("--bins", sim_bins, "Equal-frequency bins for size")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write the selected checkpoint");
  std::string train_in, train_out = "checkpoint.bin";
  TrainFlags train_flags;
  train_cmd->add_option("input", train_in, "Split JSONL corpus with outcomes")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->capture_default_str();
  train_flags.add(train_cmd);

  // estimate
  auto* estimate = app.add_subcommand("estimate", "Estimate per-document effects from a checkpoint");
  std::string est_ckpt, est_in, est_split = "test", est_out = "effects.jsonl";
  estimate->add_option("--checkpoint", est_ckpt, "Checkpoint path")->required();
  estimate->add_option("input", est_in, "JSONL corpus")->required();
  estimate->add_option("--split", est_split, "train, dev, test or all")->capture_default_str();
  estimate->add_option("--out", est_out, "Effects JSONL")->capture_default_str();

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Reference estimators");
  std::string base_method, base_in, base_split = "test", base_out;
  TrainFlags base_flags;
  baseline->add_option("--method", base_method, "naive or tarnet")->required()->check(
      CLI::IsMember({"naive", "tarnet"}));
  baseline->add_option("input", base_in, "Split JSONL corpus with outcomes")->required();
  baseline->add_option("--split", base_split, "Evaluation split")->capture_default_str();
  baseline->add_option("--out", base_out, "Effects JSONL (tarnet)");
  base_flags.add(baseline);

  // finmetrics
  auto* fin = app.add_subcommand("finmetrics", "Volatility and movement labels from a price series");
  std::string fin_prices, fin_convention = "inclusive";
  int fin_window = 7;
  bool fin_floor = false;
  fin->add_option("--prices", fin_prices, "CSV with date,adj_close")->required();
  fin->add_option("--window", fin_window, "Window length in trading days")->capture_default_str();
  fin->add_option("--convention", fin_convention, "inclusive or mu_terms")->capture_default_str();
  fin->add_flag("--floor", fin_floor, "Floor zero variance instead of failing");

  // run
  auto* run = app.add_subcommand("run", "Run a full experiment from a config file");
  std::string run_config, run_out;
  run->add_option("--config", run_config, "Run config JSON")->required();
  run->add_option("--out", run_out, "Override output_dir");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      Dataset ds = ingest_prep.apply(load_corpus(ingest_in));
      print_summary(ds);
      for (const auto& cov : {"sector", "size"}) {
        if (!ds.documents.empty() && ds.documents.front().treatment != Treatment::unassigned) {
          const PositivityReport rep = validate_positivity(ds, cov);
          for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
        }
      }
      if (!ingest_out.empty()) save_corpus(ds, ingest_out);
      if (!ingest_vocab.empty()) ds.vocabulary.save(ingest_vocab);
    } else if (*synth) {
      SyntheticCorpusSpec spec;
      if (!synth_spec.empty()) spec = read_json(synth_spec).get<SyntheticCorpusSpec>();
      Dataset ds = synth_prep.apply(generate_synthetic_corpus(spec, synth_seed));
      save_corpus(ds, synth_out);
      print_summary(ds);
    } else if (*simulate) {
      const Dataset ds = load_corpus(sim_in);
      const PropensityTable pt = estimate_propensities(ds, sim_bins);
      const auto p =
          SimulationParams::uniform(sim_alpha, sim_beta, sim_gamma, sim_noise, parse_outcome_kind(sim_outcome));
      const Dataset out = simulate_outcomes(ds, p, pt, sim_seed);
      save_corpus(out, sim_out);
      std::cout << std::setprecision(6) << "true_ate " << true_ate(out, "all") << "\n";
    } else if (*train_cmd) {
      const TrainConfig config = train_flags.build();
      const Dataset ds = load_corpus(train_in);
      const TrainResult r = train(ds, config);
      for (const auto& h : r.history) {
        std::cout << "epoch " << h.epoch << " train_loss " << h.train_loss << " dev " << h.dev_score << "\n";
      }
      r.checkpoint.save(train_out);
      std::cout << "selected epoch " << r.checkpoint.epoch << " -> " << train_out << "\n";
      if (r.diagnostic) {
        std::cerr << "training aborted: " << *r.diagnostic << "\n";
        return 2;
      }
    } else if (*estimate) {
      const Checkpoint ckpt = Checkpoint::load(est_ckpt);
      const Vocabulary vocab = ckpt.build_vocabulary();
      const Dataset ds = load_corpus(est_in, &vocab);
      const EffectEstimate est = estimate_ate(ckpt.build_model(), ds, est_split);
      write_effects(est, est_out);
      print_effects(ds, est);
    } else if (*baseline) {
      const Dataset ds = load_corpus(base_in);
      if (base_method == "naive") {
        std::cout << std::setprecision(6) << "naive_ate " << naive_ate(ds, base_split) << "\n";
      } else {
        const TarnetResult r = tarnet_fit_predict(ds, base_flags.build(), base_split);
        if (!base_out.empty()) write_effects(r.estimate, base_out);
        print_effects(ds, r.estimate);
        if (r.diagnostic) {
          std::cerr << "training aborted: " << *r.diagnostic << "\n";
          return 2;
        }
      }
    } else if (*fin) {
      const PriceSeries ps = PriceSeries::load_csv(fin_prices);
      VolatilityOptions opt;
      if (fin_convention == "inclusive") opt.convention = VolatilityConvention::inclusive;
      else if (fin_convention == "mu_terms") opt.convention = VolatilityConvention::mu_terms;
      else throw ConfigError("unknown convention '" + fin_convention + "'");
      opt.epsilon_floor = fin_floor;
      std::cout << "index,return,volatility,movement\n" << std::setprecision(12);
      // volatility needs mu+1 returns before t; movement needs mu volatilities before t
      for (std::size_t t = 2 * static_cast<std::size_t>(fin_window) + 1; t < ps.size(); ++t) {
        std::cout << t << "," << stock_return(ps, t) << "," << stock_volatility(ps, t, fin_window, opt) << ","
                  << stock_movement(ps, t, fin_window, opt) << "\n";
      }
    } else if (*run) {
      nlohmann::json j = read_json(run_config);
      if (!run_out.empty()) j["output_dir"] = run_out;
      const ExperimentResult r = run_experiment(ExperimentConfig::from_json(j));
      std::cout << r.report;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
