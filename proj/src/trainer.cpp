#include "diva/trainer.hpp"

#include "diva/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace diva {

namespace {

SelectionCriterion parse_selection(const std::string& name) {
  if (name == "auto" || name == "automatic") return SelectionCriterion::automatic;
  if (name == "accuracy") return SelectionCriterion::accuracy;
  if (name == "mse") return SelectionCriterion::mse;
  throw ConfigError("unknown selection criterion '" + name + "' (expected auto, accuracy or mse)");
}

std::string selection_name(SelectionCriterion s) {
  switch (s) {
    case SelectionCriterion::accuracy:
      return "accuracy";
    case SelectionCriterion::mse:
      return "mse";
    default:
      return "auto";
  }
}

QInput parse_q_input(const std::string& name) {
  if (name == "sample") return QInput::sample;
  if (name == "mean") return QInput::mean;
  throw ConfigError("unknown q_input '" + name + "' (expected sample or mean)");
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown decoder_activation '" + name + "' (expected identity or tanh)");
}

std::vector<const Document*> docs_of(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<const Document*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&ds.documents[i]);
  return out;
}

void require_trainable(const Dataset& ds, const std::string& split) {
  if (!ds.has_split(split)) throw DataError("dataset has no '" + split + "' split");
  const auto& idx = ds.split(split);
  if (idx.empty()) throw DataError("split '" + split + "' is empty");
  for (std::size_t i : idx) {
    const Document& d = ds.documents[i];
    if (d.treatment == Treatment::unassigned) throw DataError("document " + d.id + " has no treatment");
    if (!d.outcome.y) throw DataError("document " + d.id + " has no observed outcome");
  }
}

ag::Matrix normal_matrix(ag::Index rows, ag::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ag::Matrix m(rows, cols);
  for (ag::Index i = 0; i < rows; ++i) {
    for (ag::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

TrainConfig TrainConfig::full() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.profile = "desk";
  c.epochs = 10;
  c.batch_size = 64;
  c.peak_lr = 1e-2;
  c.latent_dim = 16;
  c.dim = 32;
  c.depth = 1;
  c.max_len = 512;
  c.treatment_mode = TreatmentLossMode::adversarial;
  return c;
}

TrainConfig TrainConfig::from_profile(const std::string& name) {
  if (name == "full") return full();
  if (name == "desk") return desk();
  throw ConfigError("unknown profile '" + name + "' (expected full or desk)");
}

SelectionCriterion TrainConfig::effective_selection() const {
  if (selection != SelectionCriterion::automatic) return selection;
  return outcome == OutcomeKind::binary ? SelectionCriterion::accuracy : SelectionCriterion::mse;
}

DisentangleOptions TrainConfig::disentangle_options() const {
  DisentangleOptions o;
  if (mmd_bandwidth > 0.0) o.bandwidth = Bandwidth::of(mmd_bandwidth);
  o.ort_target = ort_target;
  o.treatment_mode = treatment_mode;
  return o;
}

ModelConfig TrainConfig::model_config(int vocab_size) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.dim = dim;
  m.depth = depth;
  m.max_len = max_len;
  m.latent_dim = latent_dim;
  m.q_hidden = q_hidden;
  m.decoder_activation = decoder_activation;
  m.kind = outcome;
  return m;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr)) throw ConfigError("peak_lr must be nonnegative");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must lie in (0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (latent_dim <= 0 || dim <= 0 || depth < 0 || max_len <= 0 || q_hidden < 0) {
    throw ConfigError("model dimensions must be positive");
  }
  weights.validate();
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");
  if (!(mmd_bandwidth >= 0.0)) throw ConfigError("mmd_bandwidth must be nonnegative (0 = median heuristic)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"profile", c.profile},
                        {"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"peak_lr", c.peak_lr},
                        {"warmup_fraction", c.warmup_fraction},
                        {"dropout", c.dropout},
                        {"weight_decay", c.weight_decay},
                        {"adam_eps", c.adam_eps},
                        {"latent_dim", c.latent_dim},
                        {"dim", c.dim},
                        {"depth", c.depth},
                        {"max_len", c.max_len},
                        {"q_hidden", c.q_hidden},
                        {"decoder_activation", c.decoder_activation == Activation::tanh ? "tanh" : "identity"},
                        {"alpha", c.weights.alpha},
                        {"beta", c.weights.beta},
                        {"gamma", c.weights.gamma},
                        {"eta", c.weights.eta},
                        {"lambda", c.lambda},
                        {"mask_rate", c.mask_rate},
                        {"seed", c.seed},
                        {"outcome", to_string(c.outcome)},
                        {"selection", selection_name(c.selection)},
                        {"ort_target", to_string(c.ort_target)},
                        {"treatment_mode", to_string(c.treatment_mode)},
                        {"mmd_bandwidth", c.mmd_bandwidth},
                        {"q_input", c.q_input == QInput::mean ? "mean" : "sample"}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c = TrainConfig::from_profile(j.value("profile", std::string("full")));
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "profile") continue;
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "peak_lr") c.peak_lr = v.get<double>();
      else if (key == "warmup_fraction") c.warmup_fraction = v.get<double>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "adam_eps") c.adam_eps = v.get<double>();
      else if (key == "latent_dim") c.latent_dim = v.get<int>();
      else if (key == "dim") c.dim = v.get<int>();
      else if (key == "depth") c.depth = v.get<int>();
      else if (key == "max_len") c.max_len = v.get<int>();
      else if (key == "q_hidden") c.q_hidden = v.get<int>();
      else if (key == "decoder_activation") c.decoder_activation = parse_activation(v.get<std::string>());
      else if (key == "alpha") c.weights.alpha = v.get<double>();
      else if (key == "beta") c.weights.beta = v.get<double>();
      else if (key == "gamma") c.weights.gamma = v.get<double>();
      else if (key == "eta") c.weights.eta = v.get<double>();
      else if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "mask_rate") c.mask_rate = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "outcome") c.outcome = parse_outcome_kind(v.get<std::string>());
      else if (key == "selection") c.selection = parse_selection(v.get<std::string>());
      else if (key == "ort_target") c.ort_target = parse_orth_target(v.get<std::string>());
      else if (key == "treatment_mode") c.treatment_mode = parse_treatment_loss_mode(v.get<std::string>());
      else if (key == "mmd_bandwidth") c.mmd_bandwidth = v.get<double>();
      else if (key == "q_input") c.q_input = parse_q_input(v.get<std::string>());
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::vector<std::size_t>> stratified_batches(const Dataset& ds, std::span<const std::size_t> indices,
                                                         int batch_size, Rng& rng) {
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
  for (std::size_t i : indices) {
    const Treatment t = ds.documents[i].treatment;
    if (t == Treatment::treated) treated.push_back(i);
    else if (t == Treatment::control) control.push_back(i);
    else throw DataError("document " + ds.documents[i].id + " has no treatment");
  }
  if (treated.empty() || control.empty()) throw DataError("batches need both treated and control documents");
  std::shuffle(treated.begin(), treated.end(), rng);
  std::shuffle(control.begin(), control.end(), rng);

  const std::size_t n = treated.size() + control.size();
  std::size_t n_batches = (n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
  n_batches = std::min({n_batches, treated.size(), control.size()});
  std::vector<std::vector<std::size_t>> batches(n_batches);
  // Round-robin keeps each group's share per batch within one document.
  for (std::size_t i = 0; i < treated.size(); ++i) batches[i % n_batches].push_back(treated[i]);
  for (std::size_t i = 0; i < control.size(); ++i) batches[(n_batches - 1 - i % n_batches)].push_back(control[i]);
  for (auto& b : batches) std::shuffle(b.begin(), b.end(), rng);
  return batches;
}

FitResult fit(const Dataset& ds, const TrainConfig& config, FitProblem& problem) {
  config.validate();
  const auto& train_idx = ds.split("train");
  Rng rng = derive_stream(config.seed, StreamTag::batches);

  FitResult result;
  const double initial = problem.dev_score();
  if (!std::isfinite(initial)) throw NumericError("dev criterion is not finite before training");
  result.best_params = problem.params.snapshot();
  result.best_dev_score = initial;
  result.history.push_back(EpochRecord{0, std::numeric_limits<double>::quiet_NaN(), initial});

  if (config.epochs == 0) {
    result.rng_state = rng_state_string(rng);
    return result;
  }

  Rng probe = rng;
  const std::size_t per_epoch = stratified_batches(ds, train_idx, config.batch_size, probe).size();
  const std::size_t total = std::max<std::size_t>(2, per_epoch * static_cast<std::size_t>(config.epochs));
  const LinearWarmupSchedule schedule(config.peak_lr, config.warmup_fraction, total);
  AdamW optimizer(AdamWOptions{0.9, 0.999, config.adam_eps, config.weight_decay});

  std::size_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = stratified_batches(ds, train_idx, config.batch_size, rng);
    double loss_sum = 0.0;
    for (const auto& b : batches) {
      const auto docs = docs_of(ds, b);
      problem.params.zero_grad();
      ag::Var loss = problem.batch_loss(docs, rng);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        result.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step + 1);
        break;
      }
      ag::backward(loss);
      if (!problem.params.all_finite()) {
        result.diagnostic =
            "non-finite parameter or gradient at epoch " + std::to_string(epoch) + ", step " + std::to_string(step + 1);
        break;
      }
      ++step;
      optimizer.step(problem.params, schedule(step));
      if (!problem.params.all_finite()) {
        result.diagnostic = "non-finite parameter after update at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step);
        break;
      }
      loss_sum += value;
      result.step_losses.push_back(value);
      if (problem.on_step) problem.on_step(step, value);
    }
    if (result.diagnostic) break;
    const double score = problem.dev_score();
    result.history.push_back(EpochRecord{epoch, loss_sum / static_cast<double>(batches.size()), score});
    if (!std::isfinite(score)) {
      result.diagnostic = "non-finite dev criterion at epoch " + std::to_string(epoch);
      break;
    }
    const bool better = problem.higher_is_better ? score > result.best_dev_score : score < result.best_dev_score;
    if (better) {
      result.best_dev_score = score;
      result.best_epoch = epoch;
      result.best_params = problem.params.snapshot();
    }
  }
  problem.params.restore(result.best_params);
  result.rng_state = rng_state_string(rng);
  return result;
}

LossBreakdown total_loss(const DivaModel& model, std::span<const Document* const> batch, const TrainConfig& config,
                         Rng* rng) {
  if (batch.empty()) throw DataError("total_loss: empty batch");
  const ag::Index b = static_cast<ag::Index>(batch.size());
  const ag::Index l = model.config().latent_dim;

  std::vector<int> treatment;
  ag::Matrix outcome(b, 1);
  treatment.reserve(batch.size());
  for (ag::Index i = 0; i < b; ++i) {
    const Document& d = *batch[static_cast<std::size_t>(i)];
    if (d.treatment == Treatment::unassigned) throw DataError("document " + d.id + " has no treatment");
    if (!d.outcome.y) throw DataError("document " + d.id + " has no observed outcome");
    treatment.push_back(static_cast<int>(d.treatment));
    outcome(i, 0) = *d.outcome.y;
  }

  Rng fixed_masks = derive_stream(config.seed, StreamTag::masking);
  Rng& mask_rng = rng ? *rng : fixed_masks;
  Dropout dropout{config.dropout, rng};

  std::array<ag::Matrix, 3> eps;
  for (auto& e : eps) e = rng ? normal_matrix(b, l, *rng) : ag::Matrix::Zero(b, l);

  const TokenBatch tokens = model.make_batch(batch);
  const DivaModel::Forward f = model.forward(tokens, &eps, &dropout);

  DisentangleInputs in;
  in.h = f.encoded.pooled;
  in.h_hat = f.h_hat;
  in.t = &f.t;
  in.c = &f.c;
  in.y = &f.y;
  in.treatment = treatment;
  const bool means = config.q_input == QInput::mean;
  in.q_factual_raw = model.q.factual_raw(treatment, means ? f.y.mu : f.y.z, means ? f.c.mu : f.c.z, &dropout);
  in.outcome = outcome;
  in.kind = model.config().kind;

  LossBreakdown out;
  out.disentangle = disentangle_total(in, model.heads, config.weights, config.disentangle_options());

  std::vector<MaskedTokens> masked;
  masked.reserve(batch.size());
  for (const Document* d : batch) {
    const std::size_t keep = std::min(d->tokens.size(), static_cast<std::size_t>(model.config().max_len));
    masked.push_back(mask_tokens(std::span<const int>(d->tokens.data(), keep), config.mask_rate, mask_rng));
  }
  out.mlm = model.encoder.mlm_loss(masked, &dropout);
  out.total = config.lambda == 0.0 ? out.disentangle.total : out.disentangle.total + config.lambda * out.mlm;
  return out;
}

double dev_criterion(const DivaModel& model, const Dataset& ds, const std::string& split,
                     SelectionCriterion criterion) {
  const auto& idx = ds.split(split);
  if (idx.empty()) throw DataError("split '" + split + "' is empty");
  if (criterion == SelectionCriterion::automatic) {
    criterion = model.config().kind == OutcomeKind::binary ? SelectionCriterion::accuracy : SelectionCriterion::mse;
  }
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t end = std::min(idx.size(), start + kChunk);
    const auto docs = docs_of(ds, std::span<const std::size_t>(idx.data() + start, end - start));
    const DivaModel::Means m = model.posterior_means(docs);
    const ag::Matrix q0 = model.q.predict(0, m.y, m.c);
    const ag::Matrix q1 = model.q.predict(1, m.y, m.c);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const Document& d = *docs[i];
      if (!d.outcome.y) throw DataError("document " + d.id + " has no observed outcome");
      const double pred = d.treated() ? q1(static_cast<ag::Index>(i), 0) : q0(static_cast<ag::Index>(i), 0);
      if (criterion == SelectionCriterion::accuracy) {
        total += ((pred >= 0.5 ? 1.0 : 0.0) == *d.outcome.y) ? 1.0 : 0.0;
      } else {
        total += (pred - *d.outcome.y) * (pred - *d.outcome.y);
      }
    }
  }
  return total / static_cast<double>(idx.size());
}

TrainResult train(const Dataset& ds, const TrainConfig& config) {
  config.validate();
  require_trainable(ds, "train");
  require_trainable(ds, "dev");
  if (ds.vocabulary.size() == 0) throw DataError("dataset has no vocabulary");

  DivaModel model(config.model_config(static_cast<int>(ds.vocabulary.size())), config.seed);
  const SelectionCriterion criterion = config.effective_selection();

  FitProblem problem;
  problem.params = model.parameters();
  problem.batch_loss = [&](std::span<const Document* const> batch, Rng& rng) {
    return total_loss(model, batch, config, &rng).total;
  };
  problem.dev_score = [&] { return dev_criterion(model, ds, "dev", criterion); };
  problem.higher_is_better = criterion == SelectionCriterion::accuracy;

  FitResult fitted = fit(ds, config, problem);

  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.model = model.config();
  result.checkpoint.vocabulary = ds.vocabulary.tokens();
  result.checkpoint.tensors = std::move(fitted.best_params);
  result.checkpoint.epoch = fitted.best_epoch;
  result.checkpoint.dev_score = fitted.best_dev_score;
  result.checkpoint.rng_state = std::move(fitted.rng_state);
  result.history = std::move(fitted.history);
  result.step_losses = std::move(fitted.step_losses);
  result.diagnostic = std::move(fitted.diagnostic);
  return result;
}

}  // namespace diva
