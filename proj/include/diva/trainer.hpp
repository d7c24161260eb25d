#pragma once

#include "diva/corpus.hpp"
#include "diva/disentangle.hpp"
#include "diva/model.hpp"
#include "diva/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace diva {

enum class SelectionCriterion { automatic, accuracy, mse };

/// Latents fed to the outcome heads during training: the reparameterised
/// sample or the posterior mean (the estimation-time input).
enum class QInput { sample, mean };

struct TrainConfig {
  std::string profile = "full";
  int epochs = 30;
  int batch_size = 86;
  double peak_lr = 5e-5;
  double warmup_fraction = 0.10;
  double dropout = 0.2;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int latent_dim = 200;
  int dim = 768;
  int depth = 12;
  int max_len = 512;
  int q_hidden = 0;
  Activation decoder_activation = Activation::identity;
  LossWeights weights;  // alpha, beta, gamma, eta
  double lambda = 0.01;  // MLM weight
  double mask_rate = 0.15;
  std::uint64_t seed = 0;
  OutcomeKind outcome = OutcomeKind::real;
  SelectionCriterion selection = SelectionCriterion::automatic;
  OrthTarget ort_target = OrthTarget::identity;
  TreatmentLossMode treatment_mode = TreatmentLossMode::joint;
  double mmd_bandwidth = 0.0;  // 0 = median heuristic
  QInput q_input = QInput::sample;

  /// Full-scale model.
  static TrainConfig full();
  /// Small model that trains on a laptop CPU in seconds.
  static TrainConfig desk();
  static TrainConfig from_profile(const std::string& name);

  SelectionCriterion effective_selection() const;
  DisentangleOptions disentangle_options() const;
  ModelConfig model_config(int vocab_size) const;
  void validate() const;
};

/// Flat key-value JSON; unknown keys are rejected. A "profile" key selects
/// the base values that the remaining keys override.
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// All parameters plus the metadata needed to rebuild and resume a model.
struct Checkpoint {
  TrainConfig config;
  ModelConfig model;
  std::vector<std::string> vocabulary;
  std::map<std::string, ag::Matrix> tensors;
  int epoch = 0;
  double dev_score = 0.0;
  std::string rng_state;

  /// Binary container: magic, JSON header length + header, raw little-endian
  /// doubles for each tensor in header order.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  DivaModel build_model() const;
  Vocabulary build_vocabulary() const;
};

struct EpochRecord {
  int epoch = 0;           // 0 = before training
  double train_loss = 0.0;  // mean total loss over the epoch's steps
  double dev_score = 0.0;
};

/// Batches of a fixed split with every batch holding at least one treated and
/// one control document; groups are spread evenly across batches.
std::vector<std::vector<std::size_t>> stratified_batches(const Dataset& ds, std::span<const std::size_t> indices,
                                                         int batch_size, Rng& rng);

/// Generic epoch loop shared by DIVA and the baselines.
struct FitProblem {
  ParameterList params;
  std::function<ag::Var(std::span<const Document* const> batch, Rng& rng)> batch_loss;
  std::function<double()> dev_score;
  bool higher_is_better = false;
  /// Called after each optimizer step with (step, loss); optional.
  std::function<void(std::size_t, double)> on_step;
};

struct FitResult {
  std::map<std::string, ag::Matrix> best_params;
  int best_epoch = 0;
  double best_dev_score = 0.0;
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  std::optional<std::string> diagnostic;  // set when training aborted
  std::string rng_state;
};

FitResult fit(const Dataset& ds, const TrainConfig& config, FitProblem& problem);

/// One batch's loss terms.
struct LossBreakdown {
  DisentangleTerms disentangle;
  ag::Var mlm;
  ag::Var total;
};

/// Everything random in a training step (latent noise, masks, dropout) is
/// drawn from `rng`; with `rng` null the step is deterministic (eps = 0, no
/// dropout) and masks come from a fixed stream.
LossBreakdown total_loss(const DivaModel& model, std::span<const Document* const> batch, const TrainConfig& config,
                         Rng* rng);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  std::optional<std::string> diagnostic;
};

/// Trains on the "train" split, selects on "dev", returns the best checkpoint.
TrainResult train(const Dataset& ds, const TrainConfig& config);

/// Dev criterion of a model: outcome accuracy (binary) or MSE (real) of the
/// factual Q prediction.
double dev_criterion(const DivaModel& model, const Dataset& ds, const std::string& split, SelectionCriterion criterion);

}  // namespace diva
