#pragma once

// Causal evaluation metrics and price-derived financial labels.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace diva {

/// Root mean squared ITE error.
double pehe_sqrt(std::span<const double> tau_true, std::span<const double> tau_hat);
/// |tau - mean(tau_hat)|.
double ate_error(double tau_true_mean, std::span<const double> tau_hat);

struct MetricReport {
  double pehe_sqrt = 0.0;
  double ate_error = 0.0;
  std::size_t n = 0;
  std::string config_hash;
};

MetricReport evaluate_effects(std::span<const double> tau_true, std::span<const double> tau_hat,
                              std::string config_hash = {});

struct PricePoint {
  std::chrono::sys_days date;
  double adj_close = 0.0;
};

/// Dividend-adjusted closes with strictly increasing dates and positive prices.
class PriceSeries {
 public:
  PriceSeries() = default;
  explicit PriceSeries(std::vector<PricePoint> points);
  static PriceSeries from_prices(std::span<const double> prices);  // consecutive synthetic dates

  /// CSV with header "date,adj_close"; ISO-8601 dates.
  static PriceSeries load_csv(const std::filesystem::path& path);

  std::size_t size() const { return points_.size(); }
  const PricePoint& operator[](std::size_t i) const { return points_[i]; }
  /// Index of the first point on or after `date`, size() when none.
  std::size_t index_on_or_after(std::chrono::sys_days date) const;

 private:
  std::vector<PricePoint> points_;
};

std::chrono::sys_days parse_iso_date(const std::string& text);

/// r_t = P_t / P_{t-1} - 1.
double stock_return(const PriceSeries& ps, std::size_t t);

/// Window convention for the volatility sum.
///  inclusive: returns r_{t-mu} .. r_t (mu + 1 terms), divisor mu.
///  mu_terms:  returns r_{t-mu+1} .. r_t (mu terms), divisor mu.
enum class VolatilityConvention { inclusive, mu_terms };

struct VolatilityOptions {
  VolatilityConvention convention = VolatilityConvention::inclusive;
  /// When set, the variance is floored at 1e-12 instead of failing on a
  /// zero-variance window.
  bool epsilon_floor = false;
};

inline constexpr double kVarianceFloor = 1e-12;

/// ln(sqrt(sum (r - rbar)^2 / mu)) over the window ending at t.
double stock_volatility(const PriceSeries& ps, std::size_t t, int mu, VolatilityOptions options = {});

/// 1 iff r_t >= mean of the volatility values v_s for s in [t - mu, t].
int stock_movement(const PriceSeries& ps, std::size_t t, int mu, VolatilityOptions options = {});

}  // namespace diva
