#include "diva/metrics.hpp"

#include "diva/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace diva {

double pehe_sqrt(std::span<const double> tau_true, std::span<const double> tau_hat) {
  if (tau_true.size() != tau_hat.size()) throw DataError("pehe_sqrt: length mismatch");
  if (tau_true.empty()) throw DataError("pehe_sqrt: empty input");
  double sq = 0.0;
  for (std::size_t i = 0; i < tau_true.size(); ++i) {
    const double d = tau_true[i] - tau_hat[i];
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(tau_true.size()));
}

double ate_error(double tau_true_mean, std::span<const double> tau_hat) {
  if (tau_hat.empty()) throw DataError("ate_error: empty input");
  double total = 0.0;
  for (double v : tau_hat) total += v;
  return std::abs(tau_true_mean - total / static_cast<double>(tau_hat.size()));
}

MetricReport evaluate_effects(std::span<const double> tau_true, std::span<const double> tau_hat,
                              std::string config_hash) {
  MetricReport r;
  r.pehe_sqrt = pehe_sqrt(tau_true, tau_hat);
  double mean_true = 0.0;
  for (double v : tau_true) mean_true += v;
  mean_true /= static_cast<double>(tau_true.size());
  r.ate_error = ate_error(mean_true, tau_hat);
  r.n = tau_true.size();
  r.config_hash = std::move(config_hash);
  return r;
}

PriceSeries::PriceSeries(std::vector<PricePoint> points) : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i].adj_close > 0.0)) throw DataError("price series: prices must be positive");
    if (i > 0 && !(points_[i - 1].date < points_[i].date)) {
      throw DataError("price series: dates must be strictly increasing");
    }
  }
}

PriceSeries PriceSeries::from_prices(std::span<const double> prices) {
  std::vector<PricePoint> points;
  const std::chrono::sys_days start = std::chrono::year{2000} / std::chrono::January / 1;
  for (std::size_t i = 0; i < prices.size(); ++i) {
    points.push_back(PricePoint{start + std::chrono::days{static_cast<int>(i)}, prices[i]});
  }
  return PriceSeries(std::move(points));
}

std::chrono::sys_days parse_iso_date(const std::string& text) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char dash1 = 0;
  char dash2 = 0;
  std::istringstream is(text);
  if (!(is >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-') {
    throw DataError("invalid ISO-8601 date '" + text + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + text + "'");
  return std::chrono::sys_days{ymd};
}

PriceSeries PriceSeries::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open price file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("price file " + path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,adj_close") throw DataError("price file header must be 'date,adj_close'");
  std::vector<PricePoint> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("price file line " + std::to_string(line_no) + ": expected 2 fields");
    PricePoint p;
    p.date = parse_iso_date(line.substr(0, comma));
    try {
      p.adj_close = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw DataError("price file line " + std::to_string(line_no) + ": bad adj_close");
    }
    points.push_back(p);
  }
  return PriceSeries(std::move(points));
}

std::size_t PriceSeries::index_on_or_after(std::chrono::sys_days date) const {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (points_[i].date >= date) return i;
  }
  return points_.size();
}

double stock_return(const PriceSeries& ps, std::size_t t) {
  if (t == 0) throw DataError("stock_return: t must be at least 1");
  if (t >= ps.size()) throw DataError("stock_return: t beyond the series");
  return ps[t].adj_close / ps[t - 1].adj_close - 1.0;
}

double stock_volatility(const PriceSeries& ps, std::size_t t, int mu, VolatilityOptions options) {
  if (mu < 2) throw DataError("stock_volatility: window must be at least 2");
  const std::size_t terms = options.convention == VolatilityConvention::inclusive ? static_cast<std::size_t>(mu) + 1
                                                                                  : static_cast<std::size_t>(mu);
  // Oldest return used is r_{t - terms + 1}, which needs index >= 1.
  if (t >= ps.size() || t < terms) throw DataError("stock_volatility: not enough price history for the window");
  std::vector<double> r;
  r.reserve(terms);
  for (std::size_t i = 0; i < terms; ++i) r.push_back(stock_return(ps, t - i));
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(terms);
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  double variance = ss / static_cast<double>(mu);
  if (!(variance > 0.0)) {
    if (!options.epsilon_floor) throw NumericError("degenerate volatility (-inf): zero variance in window");
  }
  if (options.epsilon_floor) variance = std::max(variance, kVarianceFloor);
  return std::log(std::sqrt(variance));
}

int stock_movement(const PriceSeries& ps, std::size_t t, int mu, VolatilityOptions options) {
  if (mu < 2) throw DataError("stock_movement: window must be at least 2");
  if (t < static_cast<std::size_t>(mu)) throw DataError("stock_movement: not enough price history for the window");
  double mean_v = 0.0;
  for (std::size_t s = t - static_cast<std::size_t>(mu); s <= t; ++s) mean_v += stock_volatility(ps, s, mu, options);
  mean_v /= static_cast<double>(mu + 1);
  return stock_return(ps, t) >= mean_v ? 1 : 0;
}

}  // namespace diva
