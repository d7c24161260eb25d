#pragma once
// End-to-end runner: corpus -> treatment/split -> outcomes -> train ->
// estimate -> metrics, repeated over a list of seeds.

#include "diva/corpus.hpp"
#include "diva/error.hpp"
#include "diva/simulate.hpp"
#include "diva/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace diva {

/// A run configuration is one flat JSON object. The keys below belong to the
/// runner; every other key is forwarded to TrainConfig.
struct ExperimentConfig {
  std::filesystem::path output_dir = "run";
  std::vector<std::uint64_t> seeds = {1};
  /// JSONL corpus to ingest; a synthetic corpus is generated when empty.
  std::filesystem::path corpus;
  SyntheticCorpusSpec synth;
  int k_top = 1000;
  int k_bottom = 1000;
  SplitRatio split;
  int propensity_bins = 4;
  /// Outcome simulation (skipped when `prices` is set).
  bool simulate = true;
  double sim_alpha = 1.0;
  double sim_beta = 1.0;
  double sim_gamma = 0.5;
  double sim_noise = 1.0;
  std::vector<std::string> baselines = {"naive", "tarnet"};
  /// Price CSV, or a directory of <ticker>.csv files keyed by meta.ticker.
  /// Documents then need meta.date; outcomes are labelled per horizon.
  std::filesystem::path prices;
  std::vector<int> horizons = {3, 7, 15, 30};
  TrainConfig train;
  nlohmann::json raw;  // the parsed input, copied into the run directory

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;
};

/// Raised when a stage fails; the manifest records the same stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Per-seed values of one metric.
struct SeedValues {
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  double mean() const;
  double mad() const;  // mean absolute deviation around the mean
};

struct MethodResult {
  std::map<std::string, SeedValues> metrics;  // ate_hat, delta_ate, pehe_sqrt
};

struct ExperimentResult {
  std::map<std::string, MethodResult> methods;  // diva, naive, tarnet
  /// horizon -> per-seed DIVA ate_hat, only when prices are configured.
  std::map<int, SeedValues> ate_by_horizon;
  /// sector -> per-seed mean DIVA ite_hat on the test split.
  std::map<std::string, SeedValues> ite_by_sector;
  std::string report;  // contents of report.md
};

/// "x ± mad", or "x" for a single value.
std::string format_mean_mad(const SeedValues& v, int precision = 4);

/// Dataset after ingest/synthesis, treatment assignment and splitting for one
/// seed (no outcomes yet).
Dataset prepare_dataset(const ExperimentConfig& config, std::uint64_t seed);
/// prepare_dataset followed by propensity estimation and outcome simulation.
Dataset prepare_simulated_dataset(const ExperimentConfig& config, std::uint64_t seed);

ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const std::filesystem::path& config_file);

}  // namespace diva
