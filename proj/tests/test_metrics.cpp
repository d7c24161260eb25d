#include "diva/error.hpp"
#include "diva/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

using namespace diva;

TEST(Pehe, ClosedForms) {
  const std::vector<double> truth = {2.0, 0.0};
  const std::vector<double> hat = {1.0, 1.0};
  EXPECT_DOUBLE_EQ(pehe_sqrt(truth, hat), 1.0);
  EXPECT_DOUBLE_EQ(pehe_sqrt(hat, truth), 1.0);
  EXPECT_EQ(pehe_sqrt(truth, truth), 0.0);
  EXPECT_THROW(pehe_sqrt(truth, std::vector<double>{1.0}), DataError);
  EXPECT_THROW(pehe_sqrt(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST(AteError, AbsoluteMeanGap) {
  const std::vector<double> hat = {0.9, 1.1, 1.3};
  EXPECT_NEAR(ate_error(1.0, hat), 0.1, 1e-15);
  EXPECT_NEAR(ate_error(1.2, hat), 0.1, 1e-15);
  EXPECT_THROW(ate_error(0.0, std::vector<double>{}), DataError);
  const MetricReport r = evaluate_effects(std::vector<double>{1.0, 1.0, 1.0}, hat, "abc");
  EXPECT_NEAR(r.ate_error, 0.1, 1e-15);
  EXPECT_EQ(r.n, 3u);
  EXPECT_EQ(r.config_hash, "abc");
}

TEST(StockReturn, Values) {
  const std::vector<double> p = {100.0, 110.0, 110.0, 55.0};
  const PriceSeries ps = PriceSeries::from_prices(p);
  EXPECT_NEAR(stock_return(ps, 1), 0.1, 1e-15);
  EXPECT_EQ(stock_return(ps, 2), 0.0);
  EXPECT_EQ(stock_return(ps, 3), -0.5);
  EXPECT_THROW(stock_return(ps, 0), DataError);
  EXPECT_THROW(stock_return(ps, 4), DataError);
}

TEST(StockVolatility, HandComputedWindow) {
  const std::vector<double> p = {100.0, 110.0, 99.0, 108.9};
  const PriceSeries ps = PriceSeries::from_prices(p);
  // Returns 0.1, -0.1, 0.1; variance 0.02667 / 2.
  EXPECT_NEAR(stock_volatility(ps, 3, 2), -2.1587, 1e-4);
  EXPECT_NEAR(stock_volatility(ps, 3, 2), std::log(std::sqrt(0.08 / 3.0 / 2.0)), 1e-12);
  // Two-term convention: returns -0.1, 0.1.
  EXPECT_NEAR(stock_volatility(ps, 3, 2, {VolatilityConvention::mu_terms, false}), std::log(std::sqrt(0.01)), 1e-12);
  EXPECT_THROW(stock_volatility(ps, 2, 2), DataError);
  EXPECT_THROW(stock_volatility(ps, 3, 1), DataError);
}

TEST(StockVolatility, ZeroVarianceFailsOrFloors) {
  const std::vector<double> flat(6, 100.0);
  const PriceSeries ps = PriceSeries::from_prices(flat);
  EXPECT_THROW(stock_volatility(ps, 5, 3), NumericError);
  const double floored = stock_volatility(ps, 5, 3, {VolatilityConvention::inclusive, true});
  EXPECT_NEAR(floored, std::log(1e-6), 1e-12);
  EXPECT_NEAR(floored, -13.8155, 1e-4);
}

TEST(StockVolatility, ScaleInvariant) {
  std::vector<double> p, q;
  for (int i = 0; i < 20; ++i) {
    p.push_back(50.0 + 5.0 * std::sin(0.7 * i) + i);
    q.push_back(3.0 * p.back());
  }
  const PriceSeries a = PriceSeries::from_prices(p), b = PriceSeries::from_prices(q);
  for (std::size_t t = 5; t < 20; ++t) EXPECT_NEAR(stock_volatility(a, t, 4), stock_volatility(b, t, 4), 1e-12);
}

TEST(StockMovement, MatchesDirectDefinitionAndShifts) {
  std::vector<double> p;
  for (int i = 0; i < 30; ++i) p.push_back(100.0 + 8.0 * std::sin(0.9 * i) + 0.3 * i);
  const PriceSeries ps = PriceSeries::from_prices(p);
  std::vector<double> shifted = {77.0};
  shifted.insert(shifted.end(), p.begin(), p.end());
  const PriceSeries later = PriceSeries::from_prices(shifted);
  const int mu = 3;
  int ones = 0;
  for (std::size_t t = 2 * mu + 1; t < p.size(); ++t) {
    double mean_v = 0.0;
    for (std::size_t s = t - mu; s <= t; ++s) mean_v += stock_volatility(ps, s, mu);
    mean_v /= mu + 1;
    const int expect = stock_return(ps, t) >= mean_v ? 1 : 0;
    EXPECT_EQ(stock_movement(ps, t, mu), expect);
    EXPECT_EQ(stock_movement(later, t + 1, mu), expect);
    ones += expect;
  }
  // Log-volatilities are negative, so non-negative returns always move up.
  EXPECT_GT(ones, 0);
  EXPECT_THROW(stock_movement(ps, 2, mu), DataError);
}

TEST(StockMovement, FloorAppliesInsideTheWindow) {
  const std::vector<double> flat(10, 20.0);
  const PriceSeries ps = PriceSeries::from_prices(flat);
  EXPECT_THROW(stock_movement(ps, 9, 3), NumericError);
  EXPECT_EQ(stock_movement(ps, 9, 3, {VolatilityConvention::inclusive, true}), 1);
}

TEST(PriceSeries, CsvLoadingAndValidation) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto good = dir / "diva_test_prices.csv";
  {
    std::ofstream out(good);
    out << "date,adj_close\n2020-01-02,10\n2020-01-03,11\n2020-01-06,12.5\n";
  }
  const PriceSeries ps = PriceSeries::load_csv(good);
  ASSERT_EQ(ps.size(), 3u);
  EXPECT_EQ(ps[2].adj_close, 12.5);
  EXPECT_EQ(ps.index_on_or_after(parse_iso_date("2020-01-04")), 2u);
  EXPECT_EQ(ps.index_on_or_after(parse_iso_date("2020-01-03")), 1u);
  EXPECT_EQ(ps.index_on_or_after(parse_iso_date("2021-01-01")), 3u);

  const auto bad = dir / "diva_test_prices_bad.csv";
  {
    std::ofstream out(bad);
    out << "day,close\n2020-01-02,10\n";
  }
  EXPECT_THROW(PriceSeries::load_csv(bad), DataError);
  {
    std::ofstream out(bad);
    out << "date,adj_close\n2020-01-03,10\n2020-01-02,11\n";
  }
  EXPECT_THROW(PriceSeries::load_csv(bad), DataError);
  {
    std::ofstream out(bad);
    out << "date,adj_close\n2020-01-02,-1\n";
  }
  EXPECT_THROW(PriceSeries::load_csv(bad), DataError);
  EXPECT_THROW(parse_iso_date("2020-02-30"), DataError);
  EXPECT_THROW(parse_iso_date("yesterday"), DataError);
  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}
