#include "diva/experiment.hpp"

#include "diva/baselines.hpp"
#include "diva/estimator.hpp"
#include "diva/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace diva {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  ExperimentConfig c;
  c.raw = j;
  json train = json::object();
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
      else if (key == "corpus") c.corpus = v.get<std::string>();
      else if (key == "synth") c.synth = v.get<SyntheticCorpusSpec>();
      else if (key == "k_top") c.k_top = v.get<int>();
      else if (key == "k_bottom") c.k_bottom = v.get<int>();
      else if (key == "split") {
        const auto r = v.get<std::vector<int>>();
        if (r.size() != 3) throw ConfigError("split must have three components");
        c.split = SplitRatio{r[0], r[1], r[2]};
      } else if (key == "propensity_bins") c.propensity_bins = v.get<int>();
      else if (key == "simulate") c.simulate = v.get<bool>();
      else if (key == "sim_alpha") c.sim_alpha = v.get<double>();
      else if (key == "sim_beta") c.sim_beta = v.get<double>();
      else if (key == "sim_gamma") c.sim_gamma = v.get<double>();
      else if (key == "sim_noise") c.sim_noise = v.get<double>();
      else if (key == "baselines") c.baselines = v.get<std::vector<std::string>>();
      else if (key == "prices") c.prices = v.get<std::string>();
      else if (key == "horizons") c.horizons = v.get<std::vector<int>>();
      else train[key] = v;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.train = train_config_from_json(train);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("run config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("run config: seeds must not be empty");
  if (k_top <= 0 || k_bottom <= 0) throw ConfigError("run config: k_top and k_bottom must be positive");
  if (propensity_bins <= 0) throw ConfigError("run config: propensity_bins must be positive");
  for (const auto& b : baselines) {
    if (b != "naive" && b != "tarnet") throw ConfigError("run config: unknown baseline '" + b + "'");
  }
  if (!prices.empty()) {
    if (horizons.empty()) throw ConfigError("run config: horizons must not be empty when prices are given");
    for (int h : horizons) {
      if (h < 2) throw ConfigError("run config: horizons must be at least 2");
    }
  }
  if (corpus.empty()) synth.validate();
  train.validate();
}

double SeedValues::mean() const {
  if (values.empty()) throw DataError("mean of an empty value list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double SeedValues::mad() const {
  const double m = mean();
  double s = 0.0;
  for (double v : values) s += std::abs(v - m);
  return s / static_cast<double>(values.size());
}

std::string format_mean_mad(const SeedValues& v, int precision) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v.mean();
  if (v.values.size() > 1) out << " ± " << v.mad();
  return out.str();
}

Dataset prepare_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  Dataset ds = config.corpus.empty() ? generate_synthetic_corpus(config.synth, seed) : load_corpus(config.corpus);
  ds = assign_treatment(ds, config.k_top, config.k_bottom);
  return split_dataset(ds, config.split, seed);
}

Dataset prepare_simulated_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  const Dataset ds = prepare_dataset(config, seed);
  const PropensityTable pt = estimate_propensities(ds, config.propensity_bins);
  const auto params =
      SimulationParams::uniform(config.sim_alpha, config.sim_beta, config.sim_gamma, config.sim_noise,
                                     config.train.outcome);
  return simulate_outcomes(ds, params, pt, seed);
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

class Manifest {
 public:
  Manifest(fs::path path, std::string config_hash) : path_(std::move(path)) {
    doc_["config_hash"] = std::move(config_hash);
    doc_["started"] = utc_now();
    doc_["status"] = "running";
    doc_["stages"] = json::array();
  }

  template <class F>
  auto stage(const std::string& name, std::optional<std::uint64_t> seed, F&& body) -> decltype(body()) {
    json entry{{"name", name}, {"started", utc_now()}};
    if (seed) entry["seed"] = *seed;
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        finish(entry, nullptr);
      } else {
        auto out = body();
        finish(entry, nullptr);
        return out;
      }
    } catch (const std::exception& e) {
      finish(entry, e.what());
      doc_["status"] = "failed";
      doc_["failed_stage"] = name;
      doc_["finished"] = utc_now();
      flush();
      throw StageError(name, e.what());
    }
  }

  void complete() {
    doc_["status"] = "ok";
    doc_["finished"] = utc_now();
    flush();
  }

 private:
  void finish(json& entry, const char* error) {
    entry["finished"] = utc_now();
    entry["status"] = error ? "failed" : "ok";
    if (error) entry["error"] = error;
    doc_["stages"].push_back(entry);
  }
  void flush() const { write_text(path_, doc_.dump(2) + "\n"); }

  fs::path path_;
  json doc_;
};

struct Accumulator {
  ExperimentResult result;

  void add(const std::string& method, const std::string& metric, std::uint64_t seed, double value) {
    auto& sv = result.methods[method].metrics[metric];
    sv.seeds.push_back(seed);
    sv.values.push_back(value);
  }
};

std::vector<double> true_ites(const Dataset& ds, const EffectEstimate& est) {
  std::map<std::string, const Document*> by_id;
  for (const auto& d : ds.documents) by_id.emplace(d.id, &d);
  std::vector<double> out;
  out.reserve(est.ids.size());
  for (const auto& id : est.ids) {
    const Document* d = by_id.at(id);
    if (!d->outcome.ite) throw DataError("document " + id + " has no ground-truth ite");
    out.push_back(*d->outcome.ite);
  }
  return out;
}

bool has_ground_truth(const Dataset& ds, const std::string& split) {
  for (std::size_t i : ds.select(split)) {
    if (!ds.documents[i].outcome.ite) return false;
  }
  return true;
}

void record_estimate(Accumulator& acc, const std::string& method, std::uint64_t seed, const Dataset& ds,
                     const EffectEstimate& est) {
  acc.add(method, "ate_hat", seed, est.ate_hat);
  if (!has_ground_truth(ds, est.split)) return;
  const std::vector<double> tau = true_ites(ds, est);
  const MetricReport m = evaluate_effects(tau, est.ite_hat);
  acc.add(method, "delta_ate", seed, m.ate_error);
  acc.add(method, "pehe_sqrt", seed, m.pehe_sqrt);
}

void record_sectors(Accumulator& acc, std::uint64_t seed, const Dataset& ds, const EffectEstimate& est) {
  std::map<std::string, const Document*> by_id;
  for (const auto& d : ds.documents) by_id.emplace(d.id, &d);
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (std::size_t i = 0; i < est.ids.size(); ++i) {
    const Document* d = by_id.at(est.ids[i]);
    const auto it = d->meta.find("sector");
    if (it == d->meta.end() || !std::holds_alternative<std::string>(it->second)) continue;
    auto& s = sums[std::get<std::string>(it->second)];
    s.first += est.ite_hat[i];
    ++s.second;
  }
  for (const auto& [sector, s] : sums) {
    auto& sv = acc.result.ite_by_sector[sector];
    sv.seeds.push_back(seed);
    sv.values.push_back(s.first / static_cast<double>(s.second));
  }
}

/// Outcome at horizon mu: volatility or movement over the window of mu
/// trading days following the document's date.
Dataset label_from_prices(const Dataset& ds, const fs::path& prices, int mu, OutcomeKind kind,
                          std::map<std::string, PriceSeries>& cache) {
  const bool per_ticker = fs::is_directory(prices);
  auto series_for = [&](const Document& d) -> const PriceSeries& {
    std::string key = prices.string();
    fs::path file = prices;
    if (per_ticker) {
      const auto it = d.meta.find("ticker");
      if (it == d.meta.end() || !std::holds_alternative<std::string>(it->second)) {
        throw DataError("document " + d.id + " lacks meta.ticker");
      }
      key = std::get<std::string>(it->second);
      file = prices / (key + ".csv");
    }
    auto found = cache.find(key);
    if (found == cache.end()) found = cache.emplace(key, PriceSeries::load_csv(file)).first;
    return found->second;
  };
  Dataset out = ds;
  for (auto& d : out.documents) {
    const auto it = d.meta.find("date");
    if (it == d.meta.end() || !std::holds_alternative<std::string>(it->second)) {
      throw DataError("document " + d.id + " lacks meta.date");
    }
    const PriceSeries& ps = series_for(d);
    const std::size_t start = ps.index_on_or_after(parse_iso_date(std::get<std::string>(it->second)));
    const std::size_t t = start + static_cast<std::size_t>(mu);
    if (start >= ps.size() || t >= ps.size()) {
      throw DataError("document " + d.id + ": price series too short for horizon " + std::to_string(mu));
    }
    d.outcome = Outcome{};
    d.outcome.y = kind == OutcomeKind::binary ? static_cast<double>(stock_movement(ps, t, mu))
                                              : stock_volatility(ps, t, mu, VolatilityOptions{.epsilon_floor = true});
  }
  return out;
}

std::string svg_bars(const std::string& title, const std::vector<std::pair<std::string, double>>& bars) {
  const double width = 60.0 * static_cast<double>(std::max<std::size_t>(bars.size(), 1)) + 80.0;
  const double height = 320.0;
  const double top = 40.0;
  const double plot_h = 220.0;
  double lo = 0.0;
  double hi = 0.0;
  for (const auto& [_, v] : bars) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  s << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"50\" x2=\"" << width - 10 << "\" y1=\"" << y_of(0.0) << "\" y2=\"" << y_of(0.0)
    << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = 60.0 + 60.0 * static_cast<double>(i);
    const double y0 = y_of(0.0);
    const double y1 = y_of(bars[i].second);
    s << "<rect x=\"" << x << "\" y=\"" << std::min(y0, y1) << "\" width=\"40\" height=\"" << std::abs(y1 - y0)
      << "\" fill=\"steelblue\"/>\n";
    s << "<text x=\"" << x << "\" y=\"" << top + plot_h + 20 << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << bars[i].first << "</text>\n";
    s << "<text x=\"" << x << "\" y=\"" << std::min(y0, y1) - 4
      << "\" font-family=\"sans-serif\" font-size=\"9\">" << std::setprecision(3) << bars[i].second
      << std::setprecision(2) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_line(const std::string& title, const std::vector<std::pair<int, double>>& points) {
  const double width = 480.0;
  const double height = 320.0;
  const double left = 60.0;
  const double top = 40.0;
  const double plot_w = 380.0;
  const double plot_h = 220.0;
  double xlo = points.front().first;
  double xhi = points.front().first;
  double ylo = points.front().second;
  double yhi = points.front().second;
  for (const auto& [x, y] : points) {
    xlo = std::min<double>(xlo, x);
    xhi = std::max<double>(xhi, x);
    ylo = std::min(ylo, y);
    yhi = std::max(yhi, y);
  }
  if (xhi - xlo < 1e-12) xhi = xlo + 1.0;
  if (yhi - ylo < 1e-12) yhi = ylo + 1.0;
  const auto px = [&](double x) { return left + plot_w * (x - xlo) / (xhi - xlo); };
  const auto py = [&](double y) { return top + plot_h * (yhi - y) / (yhi - ylo); };
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  s << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : points) s << px(x) << "," << py(y) << " ";
  s << "\"/>\n";
  for (const auto& [x, y] : points) {
    s << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"steelblue\"/>\n";
    s << "<text x=\"" << px(x) - 8 << "\" y=\"" << top + plot_h + 20
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << x << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string build_report(const ExperimentConfig& config, const ExperimentResult& r, const std::string& hash) {
  std::ostringstream s;
  s << "# Run report\n\n";
  s << "config hash: " << hash << "\n";
  s << "seeds:";
  for (auto seed : config.seeds) s << " " << seed;
  s << "\n\n";
  s << "| method | ate_hat | delta_ate | pehe_sqrt |\n|---|---|---|---|\n";
  for (const auto& [method, m] : r.methods) {
    s << "| " << method;
    for (const char* metric : {"ate_hat", "delta_ate", "pehe_sqrt"}) {
      const auto it = m.metrics.find(metric);
      s << " | " << (it == m.metrics.end() ? std::string("n/a") : format_mean_mad(it->second));
    }
    s << " |\n";
  }
  s << "\n## Per-seed values\n\n";
  for (const auto& [method, m] : r.methods) {
    for (const auto& [metric, sv] : m.metrics) {
      s << "- " << method << " " << metric << ":";
      s << std::setprecision(17);
      for (std::size_t i = 0; i < sv.values.size(); ++i) s << " " << sv.seeds[i] << "=" << sv.values[i];
      s << "\n";
    }
  }
  if (!r.ate_by_horizon.empty()) {
    s << "\n## Effect by horizon (DIVA ate_hat)\n\n| horizon | ate_hat |\n|---|---|\n";
    for (const auto& [h, sv] : r.ate_by_horizon) s << "| " << h << " | " << format_mean_mad(sv) << " |\n";
  }
  if (!r.ite_by_sector.empty()) {
    s << "\n## Effect by sector (DIVA mean ite_hat, test split)\n\n| sector | ite_hat |\n|---|---|\n";
    for (const auto& [sector, sv] : r.ite_by_sector) s << "| " << sector << " | " << format_mean_mad(sv) << " |\n";
  }
  return s.str();
}

void write_plots(const fs::path& dir, const ExperimentResult& r) {
  fs::create_directories(dir);
  if (!r.ite_by_sector.empty()) {
    std::ostringstream csv;
    csv << std::setprecision(17) << "sector,mean_ite_hat,mad\n";
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& [sector, sv] : r.ite_by_sector) {
      csv << sector << "," << sv.mean() << "," << sv.mad() << "\n";
      bars.emplace_back(sector, sv.mean());
    }
    write_text(dir / "effect_by_sector.csv", csv.str());
    write_text(dir / "effect_by_sector.svg", svg_bars("Mean estimated effect by sector", bars));
  }
  if (!r.ate_by_horizon.empty()) {
    std::ostringstream csv;
    csv << std::setprecision(17) << "horizon,ate_hat,mad\n";
    std::vector<std::pair<int, double>> pts;
    for (const auto& [h, sv] : r.ate_by_horizon) {
      csv << h << "," << sv.mean() << "," << sv.mad() << "\n";
      pts.emplace_back(h, sv.mean());
    }
    write_text(dir / "effect_by_horizon.csv", csv.str());
    write_text(dir / "effect_by_horizon.svg", svg_line("Estimated effect by horizon (trading days)", pts));
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path root = config.output_dir;
  fs::create_directories(root);
  json hashed = config.raw.is_null() ? json::object() : config.raw;
  hashed.erase("output_dir");
  const std::string canonical = hashed.dump();
  const std::string hash = hex64(fnv1a(canonical));
  write_text(root / "config.json", (config.raw.is_null() ? json::object() : config.raw).dump(2) + "\n");
  Manifest manifest(root / "manifest.json", hash);
  Accumulator acc;
  std::map<std::string, PriceSeries> price_cache;

  for (const std::uint64_t seed : config.seeds) {
    const fs::path seed_dir = root / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    TrainConfig tc = config.train;
    tc.seed = seed;

    const Dataset base = manifest.stage(config.corpus.empty() ? "synth" : "ingest", seed, [&] {
      return config.corpus.empty() ? generate_synthetic_corpus(config.synth, seed) : load_corpus(config.corpus);
    });
    const Dataset assigned =
        manifest.stage("assign", seed, [&] { return assign_treatment(base, config.k_top, config.k_bottom); });
    const Dataset split = manifest.stage("split", seed, [&] { return split_dataset(assigned, config.split, seed); });

    // One (label, dataset) pair per outcome definition.
    std::vector<std::pair<std::optional<int>, Dataset>> variants;
    if (config.prices.empty()) {
      if (config.simulate) {
        const PropensityTable pt =
            manifest.stage("propensity", seed, [&] { return estimate_propensities(split, config.propensity_bins); });
        variants.emplace_back(std::nullopt, manifest.stage("simulate", seed, [&] {
                                const auto p = SimulationParams::uniform(config.sim_alpha, config.sim_beta,
                                                                              config.sim_gamma, config.sim_noise,
                                                                              tc.outcome);
                                return simulate_outcomes(split, p, pt, seed);
                              }));
      } else {
        variants.emplace_back(std::nullopt, split);
      }
    } else {
      for (int h : config.horizons) {
        variants.emplace_back(h, manifest.stage("label_h" + std::to_string(h), seed, [&] {
                                return label_from_prices(split, config.prices, h, tc.outcome, price_cache);
                              }));
      }
    }

    bool first_variant = true;
    for (const auto& [horizon, ds] : variants) {
      const std::string suffix = horizon ? "@h" + std::to_string(*horizon) : "";
      const fs::path dir = horizon ? seed_dir / ("h" + std::to_string(*horizon)) : seed_dir;
      fs::create_directories(dir);

      const TrainResult trained = manifest.stage("train" + suffix, seed, [&] {
        TrainResult r = train(ds, tc);
        if (r.diagnostic) throw NumericError(*r.diagnostic);
        r.checkpoint.save(dir / "checkpoint.bin");
        return r;
      });
      const EffectEstimate est = manifest.stage("estimate" + suffix, seed, [&] {
        const DivaModel model = trained.checkpoint.build_model();
        EffectEstimate e = estimate_ate(model, ds, "test");
        write_effects(e, dir / "effects.jsonl");
        return e;
      });
      manifest.stage("metrics" + suffix, seed, [&] {
        record_estimate(acc, "diva" + suffix, seed, ds, est);
        if (horizon) {
          auto& sv = acc.result.ate_by_horizon[*horizon];
          sv.seeds.push_back(seed);
          sv.values.push_back(est.ate_hat);
        }
        if (first_variant) record_sectors(acc, seed, ds, est);
      });

      for (const auto& method : config.baselines) {
        manifest.stage("baseline_" + method + suffix, seed, [&] {
          if (method == "naive") {
            const double ate = naive_ate(ds, "test");
            std::vector<std::string> ids;
            for (std::size_t i : ds.split("test")) ids.push_back(ds.documents[i].id);
            const std::vector<double> ite(ids.size(), ate);
            record_estimate(acc, "naive" + suffix, seed, ds, make_estimate(ids, ite, "test", seed, "naive"));
          } else {
            TarnetResult r = tarnet_fit_predict(ds, tc, "test");
            if (r.diagnostic) throw NumericError(*r.diagnostic);
            write_effects(r.estimate, dir / "tarnet_effects.jsonl");
            record_estimate(acc, "tarnet" + suffix, seed, ds, r.estimate);
          }
        });
      }
      first_variant = false;
    }
  }

  manifest.stage("report", std::nullopt, [&] {
    acc.result.report = build_report(config, acc.result, hash);
    write_text(root / "report.md", acc.result.report);
    json metrics = json::object();
    for (const auto& [method, m] : acc.result.methods) {
      for (const auto& [metric, sv] : m.metrics) {
        metrics[method][metric] = {{"seeds", sv.seeds}, {"values", sv.values}, {"mean", sv.mean()}, {"mad", sv.mad()}};
      }
    }
    write_text(root / "metrics.json", metrics.dump(2) + "\n");
    write_plots(root / "plots", acc.result);
  });
  manifest.complete();
  return acc.result;
}

ExperimentResult run_experiment(const fs::path& config_file) {
  return run_experiment(ExperimentConfig::load(config_file));
}

}  // namespace diva
