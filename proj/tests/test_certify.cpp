#include <gtest/gtest.h>

#include <sstream>

#include "glcert/certify.hpp"

using namespace glcert;

TEST(CertifiedBounds, DirectSubstitution) {
  auto b = certified_bounds({100, 100, 2, 0.1, 1.0, 1.0});
  EXPECT_DOUBLE_EQ(b.beta, 1.0);
  EXPECT_NEAR(b.r_max, 0.1, 1e-15);
  EXPECT_NEAR(b.delta, 0.1 * std::log(10.0), 1e-15);
  EXPECT_NEAR(b.boundary_margin, 0.1 * std::log(10.0), 1e-15);
  EXPECT_EQ(b.k_min, static_cast<std::size_t>(std::ceil(std::log(100.0))));
  EXPECT_NEAR(b.prob_proxy, 100 * std::exp(-100 * 0.01), 1e-12);
  EXPECT_NEAR(b.log_prob_proxy, std::log(100.0) - 1.0, 1e-12);
}

TEST(CertifiedBounds, HypothesisViolation) {
  // beta = 0.005 < eps^2 = 0.01
  EXPECT_THROW(certified_bounds({1000, 5, 2, 0.1, 1, 1}), HypothesisViolation);
  EXPECT_THROW(certified_bounds({100, 0, 2, 0.1, 1, 1}), InvalidArgument);
  EXPECT_THROW(certified_bounds({100, 10, 2, 1.5, 1, 1}), InvalidArgument);
  EXPECT_NO_THROW(certified_bounds({100, 1, 2, 0.1, 1, 1}));  // beta = eps^2 exactly
}

TEST(CertifiedBounds, DeltaClampedWhenVacuous) {
  auto b = certified_bounds({100, 1, 2, 0.1, 1, 1});
  EXPECT_EQ(b.delta, 0.0);
  EXPECT_EQ(b.boundary_margin, 0.0);
}

TEST(CertifiedBounds, ReferenceRowsAbalone) {
  // d = 7, N = (N - M) + 100 test points, c = 0.04, C = 1.61.
  const std::pair<std::size_t, std::pair<std::size_t, double>> rows[] = {
      {100, {18, 0.0186}}, {200, {14, 0.0196}}, {300, {13, 0.0198}}, {400, {13, 0.0197}}, {500, {13, 0.0196}}};
  for (auto [nl, kr] : rows) {
    auto b = certified_bounds_k_form(nl + 100, nl, 7, 0.04, 1.61);
    EXPECT_EQ(b.k_min, kr.first) << nl;
    EXPECT_NEAR(b.r_max, kr.second, 5e-5) << nl;
    EXPECT_TRUE(b.violations.empty());
  }
}

TEST(CertifiedBounds, ReferenceRowsMnist) {
  // d = 784, N = (N - M) + 1000, c = 1, C = 0.43. The beta >= eps^2 hypothesis fails here.
  auto b = certified_bounds_k_form(2000, 1000, 784, 1.0, 0.43);
  EXPECT_EQ(b.k_min, 7u);
  EXPECT_NEAR(b.r_max, 0.703, 5e-4);
  EXPECT_FALSE(b.violations.empty());
  auto b2 = certified_bounds_k_form(1200, 200, 784, 1.0, 0.43);
  EXPECT_EQ(b2.k_min, 19u);
  EXPECT_NEAR(b2.r_max, 0.407, 5e-4);
}

TEST(CertifiedBounds, ReferenceRowsHalfmoonRadius) {
  const std::pair<std::size_t, double> rows[] = {
      {400, 0.0216}, {800, 0.0195}, {1200, 0.0177}, {1600, 0.0165}, {2000, 0.0156}};
  for (auto [nl, r] : rows) EXPECT_NEAR(certified_bounds_k_form(nl + 1000, nl, 2, 0.30, 0.85).r_max, r, 1.5e-4) << nl;
}

TEST(CertifiedBounds, MonotonicityAndScalingGrid) {
  // 10 x 10 grid of (beta, eps) with beta >= eps^2.
  for (int ie = 0; ie < 10; ++ie) {
    const double eps = 0.02 + 0.03 * ie;
    double prev_r = -1.0, prev_delta = std::numeric_limits<double>::infinity();
    for (int ib = 0; ib < 10; ++ib) {
      const double beta = eps * eps + (1.0 - eps * eps) * ib / 9.0;
      const std::size_t n = 100000;
      const auto nl = static_cast<std::size_t>(std::llround(beta * n));
      auto b = certified_bounds({n, nl, 2, eps, 0.7, 1.3});
      EXPECT_GE(b.r_max, prev_r);
      prev_r = b.r_max;
      if (std::sqrt(b.beta) / eps >= std::exp(1.0)) {
        EXPECT_LE(b.delta, prev_delta + 1e-15);
        prev_delta = b.delta;
      }
      auto b2 = certified_bounds({2 * n, 2 * nl, 2, eps, 0.7, 1.3});
      EXPECT_DOUBLE_EQ(b2.r_max, b.r_max);
      EXPECT_DOUBLE_EQ(b2.delta, b.delta);
      EXPECT_EQ(certified_bounds({n, nl, 2, eps, 0.7, 1.3}), b);
    }
  }
}

TEST(Calibration, ZeroBudgetMakesEveryPairFeasible) {
  CalibrationGrid grid{{0.1, 0.5, 1.0}, {0.5, 1.0}};
  auto eval = [](const CertBounds&) {
    CandidateAccuracies a;
    a.clean = {0.9, 0.91, 0.92};
    a.attacks.assign(5, a.clean);
    return a;
  };
  auto res = calibrate_constants(1400, 400, 2, grid, eval);
  ASSERT_TRUE(res.ok);
  for (const auto& c : res.table) EXPECT_TRUE(c.feasible);
  EXPECT_EQ(res.c_small, 1.0);
  EXPECT_EQ(res.c_big, 1.0);  // r_max tie broken by larger k_min
}

TEST(Calibration, BandRuleAndFailure) {
  CalibrationGrid grid{{0.1, 1.0}, {1.0}};
  // Large c_small breaks accuracy under attack.
  auto eval = [](const CertBounds& b) {
    CandidateAccuracies a;
    a.clean = {0.90, 0.92};
    const double drop = b.r_max > 0.02 ? 0.2 : 0.0;
    a.attacks = {{0.90 - drop, 0.92 - drop}};
    return a;
  };
  auto res = calibrate_constants(1400, 400, 2, grid, eval);
  ASSERT_TRUE(res.ok);
  EXPECT_EQ(res.c_small, 0.1);

  CalibrationGrid single{{1.0}, {1.0}};
  auto fail = calibrate_constants(1400, 400, 2, single, eval);
  EXPECT_FALSE(fail.ok);
  EXPECT_EQ(fail.c_small, 1.0);
  EXPECT_FALSE(fail.table[0].feasible);

  std::stringstream ss;
  res.dataset = "halfmoon";
  write_calibration(ss, res);
  auto back = read_calibration(ss);
  EXPECT_EQ(back.c_small, res.c_small);
  EXPECT_EQ(back.c_big, res.c_big);
  EXPECT_TRUE(back.ok);
  EXPECT_EQ(back.dataset, "halfmoon");
}

TEST(EmpiricalRadius, Examples) {
  std::vector<double> grid{0.01, 0.02, 0.05};
  auto linear = [](double r) { return r; };
  EXPECT_EQ(empirical_robustness_radius(linear, std::numeric_limits<double>::infinity(), grid), 0.05);
  EXPECT_EQ(empirical_robustness_radius(linear, 0.0, grid), 0.0);
  EXPECT_EQ(empirical_robustness_radius(linear, 0.03, grid), 0.02);
  std::vector<double> bad{0.02, 0.01};
  EXPECT_THROW(empirical_robustness_radius(linear, 1.0, bad), InvalidArgument);
}

TEST(CertifiedBoundCheck, Report) {
  std::vector<double> u{0.1, 0.5, 0.9}, ell{0.1, 0.4, 0.5};
  std::vector<bool> mask{true, true, false};
  auto rep = check_certified_bound(u, ell, mask, 0.05);
  EXPECT_NEAR(rep.max_error, 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(rep.fraction_exceeding, 0.5);
  EXPECT_EQ(check_certified_bound(ell, ell, mask, 0.0).max_error, 0.0);
}

TEST(MarginSet, Examples) {
  std::vector<double> u{0.1, 0.5, 0.7, 0.45};
  EXPECT_EQ(margin_robust_set(u, 0.0), (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_EQ(margin_robust_set(u, 0.05), (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(margin_robust_set(std::vector<double>(4, 0.5), 0.0).empty());
}
