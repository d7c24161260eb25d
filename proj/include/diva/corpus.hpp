#pragma once

#include "diva/vocabulary.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace diva {

enum class Treatment : std::int8_t { control = 0, treated = 1, unassigned = -1 };

using MetaValue = std::variant<std::string, double>;

/// Outcome slots; filled by the simulator or from observed data.
struct Outcome {
  std::optional<double> y;
  std::optional<double> y0;  // noiseless mean under T=0
  std::optional<double> y1;  // noiseless mean under T=1
  std::optional<double> ite;
};

/// Generating booleans of a synthetic document.
struct LatentTruth {
  bool u_t = false;
  bool u_c = false;
  bool u_y = false;
};

struct Document {
  std::string id;
  std::vector<int> tokens;
  std::string raw_text;
  double score = 0.0;
  Treatment treatment = Treatment::unassigned;
  std::map<std::string, MetaValue> meta;
  Outcome outcome;
  std::optional<LatentTruth> latent_truth;

  bool treated() const { return treatment == Treatment::treated; }
  const MetaValue& meta_at(const std::string& key) const;
};

enum class Provenance { real, synthetic };

struct SplitRatio {
  int train = 8;
  int dev = 1;
  int test = 6;
};

inline constexpr std::array<const char*, 3> kSplitNames = {"train", "dev", "test"};

class Dataset {
 public:
  std::vector<Document> documents;
  std::map<std::string, std::vector<std::size_t>> splits;  // name -> indices into documents
  Provenance provenance = Provenance::real;
  std::uint64_t seed = 0;
  nlohmann::json generator;  // synthetic generator settings, null for real corpora
  Vocabulary vocabulary;

  std::size_t size() const { return documents.size(); }
  const std::vector<std::size_t>& split(const std::string& name) const;
  bool has_split(const std::string& name) const { return splits.count(name) != 0; }
  /// Index list of the named split, or every document for "all".
  std::vector<std::size_t> select(const std::string& name) const;
};

struct CovariateMarginals {
  int n_sectors = 12;
  /// Probability that a document's sector falls in the half of sectors
  /// associated with its u_c value.
  double sector_fidelity = 0.9;
  double size_log_mean = 1.0;
  double size_log_sd = 0.5;
  double size_uc_shift = 0.5;
  double size_uy_shift = 0.5;
};

struct SignalFractions {
  double t_words = 0.25;
  double c_words = 0.25;
  double y_words = 0.25;
  double noise_words = 0.25;
};

struct SyntheticCorpusSpec {
  int n_docs = 3000;
  int vocab_size = 400;
  int doc_length = 48;
  SignalFractions signal_fractions;
  CovariateMarginals covariate_marginals;
  double signal_strength = 0.8;
  double latent_prior = 0.5;  // P(u = 1) for each latent boolean
  double score_weight_t = 2.0;
  double score_weight_c = 2.0;
  double score_noise = 0.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticCorpusSpec& s);
void from_json(const nlohmann::json& j, SyntheticCorpusSpec& s);

/// Reads JSONL records {"id","text","score","meta":{"sector","size",...}}.
/// Optional keys written by this library (treatment, split, latent_truth, y,
/// y0, y1, ite) are read back when present. Builds a vocabulary unless one is
/// supplied.
Dataset load_corpus(const std::filesystem::path& path, const Vocabulary* vocabulary = nullptr);

/// Writes a dataset as JSONL in the same schema load_corpus reads.
void save_corpus(const Dataset& ds, const std::filesystem::path& path);

/// Top-k_top scores become treated, bottom-k_bottom control, the rest are
/// dropped. Ordering by (score desc, id asc). Retained documents keep their
/// input order.
Dataset assign_treatment(const Dataset& ds, int k_top, int k_bottom);

/// Stratified (by treatment) deterministic split.
Dataset split_dataset(const Dataset& ds, SplitRatio ratio, std::uint64_t seed);

Dataset generate_synthetic_corpus(const SyntheticCorpusSpec& spec, std::uint64_t seed);

/// Upper edges of `bins` equal-frequency bins over `values`; a value falls in
/// the first bin whose edge is >= the value, the last bin otherwise.
std::vector<double> equal_frequency_edges(std::vector<double> values, int bins);
int bin_index(std::span<const double> edges, double value);
std::string bin_label(int bin);

struct PositivityEntry {
  std::string category;
  std::size_t n = 0;
  std::size_t treated = 0;
  double p_treated = 0.0;
  bool flagged = false;  // probability 0 or 1
};

struct PositivityReport {
  std::string covariate;
  std::vector<PositivityEntry> entries;
  std::vector<std::string> warnings;
  bool ok() const;
};

/// Empirical P(T=1 | covariate). Real-valued covariates are discretized into
/// `bins` equal-frequency bins. Levels listed in `expected_levels` that have
/// no documents are reported as warnings.
PositivityReport validate_positivity(const Dataset& ds, const std::string& covariate, int bins = 4,
                                     const std::vector<std::string>& expected_levels = {});

}  // namespace diva
