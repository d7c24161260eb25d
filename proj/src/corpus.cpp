#include "diva/corpus.hpp"

#include "diva/error.hpp"
#include "diva/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace diva {

using nlohmann::json;

const MetaValue& Document::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError("document " + id + ": missing meta." + key);
  return it->second;
}

const std::vector<std::size_t>& Dataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw DataError("dataset has no split named '" + name + "'");
  return it->second;
}

std::vector<std::size_t> Dataset::select(const std::string& name) const {
  if (name == "all") {
    std::vector<std::size_t> all(documents.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  return split(name);
}

// --------------------------------------------------------------------------
// Synthetic spec (de)serialization

void to_json(json& j, const SyntheticCorpusSpec& s) {
  j = json{{"n_docs", s.n_docs},
           {"vocab_size", s.vocab_size},
           {"doc_length", s.doc_length},
           {"signal_fractions",
            {{"t_words", s.signal_fractions.t_words},
             {"c_words", s.signal_fractions.c_words},
             {"y_words", s.signal_fractions.y_words},
             {"noise_words", s.signal_fractions.noise_words}}},
           {"covariate_marginals",
            {{"n_sectors", s.covariate_marginals.n_sectors},
             {"sector_fidelity", s.covariate_marginals.sector_fidelity},
             {"size_log_mean", s.covariate_marginals.size_log_mean},
             {"size_log_sd", s.covariate_marginals.size_log_sd},
             {"size_uc_shift", s.covariate_marginals.size_uc_shift},
             {"size_uy_shift", s.covariate_marginals.size_uy_shift}}},
           {"signal_strength", s.signal_strength},
           {"latent_prior", s.latent_prior},
           {"score_weight_t", s.score_weight_t},
           {"score_weight_c", s.score_weight_c},
           {"score_noise", s.score_noise}};
}

void from_json(const json& j, SyntheticCorpusSpec& s) {
  s = SyntheticCorpusSpec{};
  s.n_docs = j.value("n_docs", s.n_docs);
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.doc_length = j.value("doc_length", s.doc_length);
  if (j.contains("signal_fractions")) {
    const auto& f = j.at("signal_fractions");
    s.signal_fractions.t_words = f.value("t_words", s.signal_fractions.t_words);
    s.signal_fractions.c_words = f.value("c_words", s.signal_fractions.c_words);
    s.signal_fractions.y_words = f.value("y_words", s.signal_fractions.y_words);
    s.signal_fractions.noise_words = f.value("noise_words", s.signal_fractions.noise_words);
  }
  if (j.contains("covariate_marginals")) {
    const auto& m = j.at("covariate_marginals");
    auto& c = s.covariate_marginals;
    c.n_sectors = m.value("n_sectors", c.n_sectors);
    c.sector_fidelity = m.value("sector_fidelity", c.sector_fidelity);
    c.size_log_mean = m.value("size_log_mean", c.size_log_mean);
    c.size_log_sd = m.value("size_log_sd", c.size_log_sd);
    c.size_uc_shift = m.value("size_uc_shift", c.size_uc_shift);
    c.size_uy_shift = m.value("size_uy_shift", c.size_uy_shift);
  }
  s.signal_strength = j.value("signal_strength", s.signal_strength);
  s.latent_prior = j.value("latent_prior", s.latent_prior);
  s.score_weight_t = j.value("score_weight_t", s.score_weight_t);
  s.score_weight_c = j.value("score_weight_c", s.score_weight_c);
  s.score_noise = j.value("score_noise", s.score_noise);
}

void SyntheticCorpusSpec::validate() const {
  if (n_docs <= 0 || vocab_size <= 0 || doc_length <= 0) {
    throw ConfigError("synthetic spec: n_docs, vocab_size and doc_length must be positive");
  }
  const auto& f = signal_fractions;
  for (double v : {f.t_words, f.c_words, f.y_words, f.noise_words}) {
    if (!(v >= 0.0)) throw ConfigError("synthetic spec: signal fractions must be nonnegative");
  }
  const double total = f.t_words + f.c_words + f.y_words + f.noise_words;
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("synthetic spec: signal fractions must sum to 1 (got " + std::to_string(total) + ")");
  }
  if (!(signal_strength > 0.0 && signal_strength <= 1.0)) {
    throw ConfigError("synthetic spec: signal_strength must lie in (0, 1]");
  }
  if (!(latent_prior > 0.0 && latent_prior < 1.0)) {
    throw ConfigError("synthetic spec: latent_prior must lie in (0, 1)");
  }
  const auto& m = covariate_marginals;
  if (m.n_sectors < 2) throw ConfigError("synthetic spec: need at least 2 sectors");
  if (!(m.sector_fidelity >= 0.0 && m.sector_fidelity <= 1.0)) {
    throw ConfigError("synthetic spec: sector_fidelity must lie in [0, 1]");
  }
  if (!(m.size_log_sd >= 0.0) || !(score_noise >= 0.0)) {
    throw ConfigError("synthetic spec: standard deviations must be nonnegative");
  }
  if (vocab_size < 8) {
    throw ConfigError("synthetic spec: vocab_size " + std::to_string(vocab_size) +
                      " too small to host four disjoint vocabulary blocks of at least 2 words");
  }
}

// --------------------------------------------------------------------------
// JSONL ingestion

namespace {

[[noreturn]] void record_error(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& path, std::size_t line) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
    record_error(line, "missing field " + path);
  }
  return obj.at(key);
}

double require_number(const json& obj, const char* key, const std::string& path, std::size_t line) {
  const json& v = require(obj, key, path, line);
  if (!v.is_number()) record_error(line, "field " + path + " must be a number");
  return v.get<double>();
}

std::optional<double> optional_number(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  if (!obj.at(key).is_number()) record_error(line, std::string("field ") + key + " must be a number");
  return obj.at(key).get<double>();
}

}  // namespace

Dataset load_corpus(const std::filesystem::path& path, const Vocabulary* vocabulary) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());

  struct Pending {
    Document doc;
    std::optional<std::string> split;
  };
  std::vector<Pending> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      record_error(line_no, std::string("malformed JSON (") + e.what() + ")");
    }
    if (!rec.is_object()) record_error(line_no, "record is not a JSON object");

    Pending p;
    Document& doc = p.doc;
    const json& id = require(rec, "id", "id", line_no);
    if (!id.is_string()) record_error(line_no, "field id must be a string");
    doc.id = id.get<std::string>();
    const json& text = require(rec, "text", "text", line_no);
    if (!text.is_string()) record_error(line_no, "field text must be a string");
    doc.raw_text = text.get<std::string>();
    doc.score = require_number(rec, "score", "score", line_no);
    const json& meta = require(rec, "meta", "meta", line_no);
    if (!meta.is_object()) record_error(line_no, "field meta must be an object");
    const json& sector = require(meta, "sector", "meta.sector", line_no);
    if (!sector.is_string()) record_error(line_no, "field meta.sector must be a string");
    const double size = require_number(meta, "size", "meta.size", line_no);
    if (!(size > 0.0)) record_error(line_no, "field meta.size must be positive");
    for (const auto& [key, value] : meta.items()) {
      if (value.is_string()) {
        doc.meta[key] = value.get<std::string>();
      } else if (value.is_number()) {
        doc.meta[key] = value.get<double>();
      }
    }

    if (rec.contains("treatment") && !rec.at("treatment").is_null()) {
      const json& t = rec.at("treatment");
      if (!t.is_number_integer() || (t.get<int>() != 0 && t.get<int>() != 1)) {
        record_error(line_no, "field treatment must be 0 or 1");
      }
      doc.treatment = t.get<int>() == 1 ? Treatment::treated : Treatment::control;
    }
    if (rec.contains("split") && rec.at("split").is_string()) p.split = rec.at("split").get<std::string>();
    if (rec.contains("latent_truth") && rec.at("latent_truth").is_object()) {
      const json& lt = rec.at("latent_truth");
      doc.latent_truth = LatentTruth{lt.value("u_t", false), lt.value("u_c", false), lt.value("u_y", false)};
    }
    doc.outcome.y = optional_number(rec, "y", line_no);
    doc.outcome.y0 = optional_number(rec, "y0", line_no);
    doc.outcome.y1 = optional_number(rec, "y1", line_no);
    doc.outcome.ite = optional_number(rec, "ite", line_no);
    if (tokenize(doc.raw_text).empty()) record_error(line_no, "field text has no tokens");
    records.push_back(std::move(p));
  }
  if (records.empty()) throw DataError("corpus file " + path.string() + " is empty");

  Dataset ds;
  if (vocabulary != nullptr) {
    ds.vocabulary = *vocabulary;
  } else {
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const auto& r : records) texts.push_back(r.doc.raw_text);
    ds.vocabulary = Vocabulary::build(texts);
  }
  bool synthetic = true;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Document& doc = records[i].doc;
    doc.tokens = ds.vocabulary.encode(doc.raw_text);
    if (!doc.latent_truth) synthetic = false;
    if (records[i].split) ds.splits[*records[i].split].push_back(i);
    ds.documents.push_back(std::move(doc));
  }
  ds.provenance = synthetic ? Provenance::synthetic : Provenance::real;
  return ds;
}

void save_corpus(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  std::vector<const char*> split_of(ds.size(), nullptr);
  for (const auto& [name, idx] : ds.splits) {
    for (std::size_t i : idx) split_of[i] = name.c_str();
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Document& doc = ds.documents[i];
    json rec;
    rec["id"] = doc.id;
    rec["text"] = doc.raw_text;
    rec["score"] = doc.score;
    json meta = json::object();
    for (const auto& [key, value] : doc.meta) {
      std::visit([&](const auto& v) { meta[key] = v; }, value);
    }
    rec["meta"] = meta;
    if (doc.treatment != Treatment::unassigned) rec["treatment"] = doc.treated() ? 1 : 0;
    if (split_of[i] != nullptr) rec["split"] = split_of[i];
    if (doc.latent_truth) {
      rec["latent_truth"] = {{"u_t", doc.latent_truth->u_t},
                             {"u_c", doc.latent_truth->u_c},
                             {"u_y", doc.latent_truth->u_y}};
    }
    if (doc.outcome.y) rec["y"] = *doc.outcome.y;
    if (doc.outcome.y0) rec["y0"] = *doc.outcome.y0;
    if (doc.outcome.y1) rec["y1"] = *doc.outcome.y1;
    if (doc.outcome.ite) rec["ite"] = *doc.outcome.ite;
    out << rec.dump() << '\n';
  }
}

// --------------------------------------------------------------------------
// Treatment assignment and splitting

Dataset assign_treatment(const Dataset& ds, int k_top, int k_bottom) {
  if (k_top <= 0 || k_bottom <= 0) throw ConfigError("assign_treatment: k_top and k_bottom must be positive");
  const std::size_t n = ds.size();
  if (static_cast<std::size_t>(k_top) + static_cast<std::size_t>(k_bottom) > n) {
    throw ConfigError("assign_treatment: k_top + k_bottom = " + std::to_string(k_top + k_bottom) +
                      " exceeds the " + std::to_string(n) + " available documents");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (const auto& doc : ds.documents) {
    if (!std::isfinite(doc.score)) throw DataError("assign_treatment: document " + doc.id + " has no finite score");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Document& da = ds.documents[a];
    const Document& db = ds.documents[b];
    if (da.score != db.score) return da.score > db.score;
    return da.id < db.id;
  });
  std::vector<Treatment> label(n, Treatment::unassigned);
  for (std::size_t r = 0; r < static_cast<std::size_t>(k_top); ++r) label[order[r]] = Treatment::treated;
  for (std::size_t r = n - static_cast<std::size_t>(k_bottom); r < n; ++r) label[order[r]] = Treatment::control;

  Dataset out;
  out.provenance = ds.provenance;
  out.seed = ds.seed;
  out.generator = ds.generator;
  out.vocabulary = ds.vocabulary;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == Treatment::unassigned) continue;
    Document doc = ds.documents[i];
    doc.treatment = label[i];
    out.documents.push_back(std::move(doc));
  }
  return out;
}

namespace {

// Largest-remainder apportionment of `total` items over integer weights.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<int, 3>& weights) {
  const int wsum = weights[0] + weights[1] + weights[2];
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(total) * weights[k] / wsum;
    out[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(out[k]);
    used += out[k];
  }
  while (used < total) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (rem[k] > rem[best]) best = k;
    }
    ++out[best];
    rem[best] = -1.0;
    ++used;
  }
  return out;
}

}  // namespace

Dataset split_dataset(const Dataset& ds, SplitRatio ratio, std::uint64_t seed) {
  if (ratio.train <= 0 || ratio.dev <= 0 || ratio.test <= 0) {
    throw ConfigError("split_dataset: every ratio component must be positive");
  }
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Treatment t = ds.documents[i].treatment;
    if (t == Treatment::unassigned) throw DataError("split_dataset: document " + ds.documents[i].id + " has no treatment");
    (t == Treatment::treated ? treated : control).push_back(i);
  }
  const std::array<int, 3> w{ratio.train, ratio.dev, ratio.test};
  const auto target = apportion(ds.size(), w);
  auto t_quota = apportion(treated.size(), w);
  std::array<std::size_t, 3> c_quota{};
  // Control quotas absorb the rounding so split totals hit the overall target.
  for (int k = 0; k < 3; ++k) {
    while (t_quota[k] > target[k]) {
      --t_quota[k];
      for (int j = 0; j < 3; ++j) {
        if (j != k && t_quota[j] < target[j]) {
          ++t_quota[j];
          break;
        }
      }
    }
  }
  for (int k = 0; k < 3; ++k) c_quota[k] = target[k] - t_quota[k];

  Rng rng = derive_stream(seed, StreamTag::split);
  std::shuffle(treated.begin(), treated.end(), rng);
  std::shuffle(control.begin(), control.end(), rng);

  Dataset out = ds;
  out.splits.clear();
  std::size_t ti = 0;
  std::size_t ci = 0;
  for (int k = 0; k < 3; ++k) {
    auto& idx = out.splits[kSplitNames[static_cast<std::size_t>(k)]];
    for (std::size_t r = 0; r < t_quota[k]; ++r) idx.push_back(treated[ti++]);
    for (std::size_t r = 0; r < c_quota[k]; ++r) idx.push_back(control[ci++]);
    std::sort(idx.begin(), idx.end());
  }
  return out;
}

// --------------------------------------------------------------------------
// Synthetic corpora

namespace {

struct Block {
  char prefix;
  int begin;  // first word index
  int count;
};

// Largest-remainder split of doc_length positions over the four fractions.
std::array<int, 4> slot_counts(int length, const std::array<double, 4>& fractions) {
  std::array<int, 4> out{};
  std::array<double, 4> rem{};
  int used = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double exact = length * fractions[k];
    out[k] = static_cast<int>(std::floor(exact));
    rem[k] = exact - out[k];
    used += out[k];
  }
  while (used < length) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 4; ++k) {
      if (rem[k] > rem[best]) best = k;
    }
    ++out[best];
    rem[best] = -1.0;
    ++used;
  }
  return out;
}

std::string sector_name(int s) {
  std::ostringstream os;
  os << 'S' << std::setw(2) << std::setfill('0') << s;
  return os.str();
}

}  // namespace

Dataset generate_synthetic_corpus(const SyntheticCorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int per_block = spec.vocab_size / 4;
  const std::array<Block, 4> blocks{Block{'t', 0, per_block}, Block{'c', per_block, per_block},
                                    Block{'y', 2 * per_block, per_block},
                                    Block{'n', 3 * per_block, spec.vocab_size - 3 * per_block}};
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(spec.vocab_size));
  for (const auto& b : blocks) {
    for (int i = 0; i < b.count; ++i) words.push_back(std::string(1, b.prefix) + std::to_string(i));
  }

  Dataset ds;
  ds.provenance = Provenance::synthetic;
  ds.seed = seed;
  ds.generator = spec;
  for (const auto& w : words) ds.vocabulary.add(w);

  const auto& f = spec.signal_fractions;
  const auto& m = spec.covariate_marginals;
  const std::array<int, 4> slots = slot_counts(spec.doc_length, {f.t_words, f.c_words, f.y_words, f.noise_words});
  const int half = m.n_sectors / 2;
  const int width = static_cast<int>(std::to_string(spec.n_docs - 1).size());
  for (int i = 0; i < spec.n_docs; ++i) {
    Rng rng = derive_stream(seed, StreamTag::corpus, static_cast<std::uint64_t>(i));
    std::bernoulli_distribution prior(spec.latent_prior);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    LatentTruth lt{prior(rng), prior(rng), prior(rng)};

    Document doc;
    std::ostringstream id;
    id << "syn-" << std::setw(width) << std::setfill('0') << i;
    doc.id = id.str();
    doc.latent_truth = lt;

    // Sector halves: [0, half) goes with u_c = 1, [half, n) with u_c = 0.
    const bool follows = std::bernoulli_distribution(m.sector_fidelity)(rng);
    const bool in_first_half = follows ? lt.u_c : !lt.u_c;
    const int sector = in_first_half ? std::uniform_int_distribution<int>(0, half - 1)(rng)
                                     : std::uniform_int_distribution<int>(half, m.n_sectors - 1)(rng);
    doc.meta["sector"] = sector_name(sector);
    const double log_size =
        m.size_log_mean + m.size_uc_shift * lt.u_c + m.size_uy_shift * lt.u_y + m.size_log_sd * std_normal(rng);
    doc.meta["size"] = std::exp(log_size);

    const double logit = spec.score_weight_t * lt.u_t + spec.score_weight_c * lt.u_c + spec.score_noise * std_normal(rng);
    doc.score = 1.0 / (1.0 + std::exp(-logit));

    // Each latent owns a fixed share of token slots; within its slots the
    // latent sets the rate of signal words versus noise words.
    std::vector<int> picks;
    picks.reserve(static_cast<std::size_t>(spec.doc_length));
    const std::array<bool, 3> on{lt.u_t, lt.u_c, lt.u_y};
    const auto pick_word = [&](const Block& b) {
      return b.begin + std::uniform_int_distribution<int>(0, b.count - 1)(rng);
    };
    for (std::size_t slot = 0; slot < 4; ++slot) {
      for (int k = 0; k < slots[slot]; ++k) {
        if (slot == 3) {
          picks.push_back(pick_word(blocks[3]));
          continue;
        }
        const double rate = 0.5 * (1.0 + spec.signal_strength * (on[slot] ? 1.0 : -1.0));
        picks.push_back(pick_word(std::bernoulli_distribution(rate)(rng) ? blocks[slot] : blocks[3]));
      }
    }
    std::shuffle(picks.begin(), picks.end(), rng);
    std::string text;
    doc.tokens.reserve(picks.size());
    for (int w : picks) {
      const std::string& word = words[static_cast<std::size_t>(w)];
      doc.tokens.push_back(ds.vocabulary.id(word));
      if (!text.empty()) text.push_back(' ');
      text += word;
    }
    doc.raw_text = std::move(text);
    ds.documents.push_back(std::move(doc));
  }
  return ds;
}

// --------------------------------------------------------------------------
// Binning and positivity

std::vector<double> equal_frequency_edges(std::vector<double> values, int bins) {
  if (bins <= 0) throw ConfigError("bin count must be positive");
  if (values.empty()) throw DataError("cannot bin an empty value list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::vector<double> edges;
  for (int b = 0; b + 1 < bins; ++b) {
    const std::size_t last = (static_cast<std::size_t>(b) + 1) * n / static_cast<std::size_t>(bins);
    edges.push_back(last == 0 ? values.front() : values[last - 1]);
  }
  return edges;
}

int bin_index(std::span<const double> edges, double value) {
  for (std::size_t b = 0; b < edges.size(); ++b) {
    if (value <= edges[b]) return static_cast<int>(b);
  }
  return static_cast<int>(edges.size());
}

std::string bin_label(int bin) { return "bin" + std::to_string(bin); }

bool PositivityReport::ok() const {
  return std::none_of(entries.begin(), entries.end(), [](const auto& e) { return e.flagged; });
}

PositivityReport validate_positivity(const Dataset& ds, const std::string& covariate, int bins,
                                     const std::vector<std::string>& expected_levels) {
  PositivityReport report;
  report.covariate = covariate;
  std::vector<std::string> labels(ds.size());
  bool any = false;
  bool numeric = false;
  std::vector<double> values;
  for (const auto& doc : ds.documents) {
    if (doc.treatment == Treatment::unassigned) throw DataError("validate_positivity: treatment not assigned");
    auto it = doc.meta.find(covariate);
    if (it == doc.meta.end()) continue;
    any = true;
    if (std::holds_alternative<double>(it->second)) {
      numeric = true;
      values.push_back(std::get<double>(it->second));
    }
  }
  if (!any) throw DataError("validate_positivity: unknown covariate '" + covariate + "'");
  std::vector<double> edges;
  if (numeric) edges = equal_frequency_edges(values, bins);

  std::map<std::string, PositivityEntry> table;
  for (const auto& level : expected_levels) table[level].category = level;
  for (const auto& doc : ds.documents) {
    const MetaValue& v = doc.meta_at(covariate);
    const std::string label = std::holds_alternative<double>(v) ? bin_label(bin_index(edges, std::get<double>(v)))
                                                                 : std::get<std::string>(v);
    auto& e = table[label];
    e.category = label;
    ++e.n;
    if (doc.treated()) ++e.treated;
  }
  for (auto& [label, e] : table) {
    if (e.n == 0) {
      report.warnings.push_back("category '" + label + "' has no documents; excluded");
      continue;
    }
    e.p_treated = static_cast<double>(e.treated) / static_cast<double>(e.n);
    e.flagged = e.treated == 0 || e.treated == e.n;
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace diva
