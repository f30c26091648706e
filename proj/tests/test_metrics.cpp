// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "contrastforge/errors.hpp"
#include "contrastforge/metrics.hpp"
#include "contrastforge/rng.hpp"
#include "support/oracles.hpp"

using namespace contrastforge;

namespace {

std::vector<double> random_image(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform();
  return v;
}

MetricReport cell(std::string task, std::string method, std::vector<double> psnr, std::vector<double> ssim) {
  return MetricReport{std::move(task), std::move(method), std::move(psnr), std::move(ssim)};
}

}  // namespace

TEST(Psnr, Fixture) {
  const std::vector<double> ref{0, 1}, test{0.5, 0.5};
  EXPECT_NEAR(psnr(ref, test), 10 * std::log10(1 / 0.25), 1e-12);
  EXPECT_NEAR(psnr(ref, test), 6.0206, 5e-5);
  EXPECT_EQ(psnr(ref, ref), kPsnrInfinite);
  EXPECT_THROW(psnr(ref, std::vector<double>{1.0}), UsageError);
  EXPECT_THROW(psnr(ref, test, 0.0), UsageError);
}

TEST(Psnr, Homogeneity) {
  Rng rng(1);
  const auto a = random_image(rng, 100), b = random_image(rng, 100);
  std::vector<double> ha(a), hb(b);
  for (double& x : ha) x *= 0.5;
  for (double& x : hb) x *= 0.5;
  EXPECT_NEAR(psnr(ha, hb, 0.5), psnr(a, b), 1e-12);
}

TEST(Psnr, MonotoneInNoise) {
  Rng rng(2);
  const auto ref = random_image(rng, 64 * 64);
  std::vector<double> unit(ref.size());
  for (double& x : unit) x = rng.normal();
  double prev = kPsnrInfinite;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    std::vector<double> t(ref);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += amp * unit[i];
    const double p = psnr(ref, t);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Psnr, Masked) {
  const std::vector<double> ref{0, 1, 5}, test{0.5, 0.5, -7};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  EXPECT_NEAR(psnr_masked(ref, test, mask), 6.020599913279624, 1e-12);
}

TEST(Ssim, SelfSimilarityAndConstants) {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto x = random_image(rng, 24 * 17);
    EXPECT_NEAR(ssim({x, 24, 17}, {x, 24, 17}), 1.0, 1e-9);
  }
  const std::vector<double> c(16 * 16, 0.5);
  EXPECT_NEAR(ssim({c, 16, 16}, {c, 16, 16}), 1.0, 1e-12);
}

TEST(Ssim, MatchesDirectOracle) {
  Rng rng(4);
  int checked = 0;
  for (int t = 0; t < 25; ++t) {
    const auto a = random_image(rng, 32 * 32);
    auto b = a;
    const double amp = rng.uniform(0.0, 0.5);
    for (double& x : b) x = std::clamp(x + amp * rng.normal(), 0.0, 1.0);
    EXPECT_NEAR(ssim({a, 32, 32}, {b, 32, 32}), oracle::ssim(a, b, 32, 32), 1e-9);
    ++checked;
  }
  EXPECT_GE(checked, 20);
}

TEST(Ssim, Symmetric) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_image(rng, 20 * 20), b = random_image(rng, 20 * 20);
    EXPECT_LT(std::abs(ssim({a, 20, 20}, {b, 20, 20}) - ssim({b, 20, 20}, {a, 20, 20})), 1e-12);
  }
}

TEST(Ssim, TooSmallIsUsageError) {
  const std::vector<double> x(10 * 10, 0.2);
  EXPECT_THROW(ssim({x, 10, 10}, {x, 10, 10}), UsageError);
}

TEST(Ssim, GaussianTapsNormalized) {
  const auto g = gaussian_taps(11, 1.5);
  ASSERT_EQ(g.size(), 11u);
  double s = 0;
  for (double v : g) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_NEAR(g[4] / g[5], std::exp(-1.0 / (2 * 2.25)), 1e-14);
}

TEST(Baseline, IdentityFit) {
  Rng rng(6);
  const auto s = random_image(rng, 500);
  const CubicMap m = baseline_regress(s, s);
  double l1 = 0;
  for (double x : s) l1 += std::abs(m(x) - x);
  EXPECT_LT(l1 / s.size(), 1e-6);
}

TEST(Baseline, LinearRecovery) {
  Rng rng(7);
  const auto s = random_image(rng, 500);
  std::vector<double> t(s);
  for (double& x : t) x *= 2;
  const CubicMap m = baseline_regress(s, t);
  EXPECT_NEAR(m.coeffs[0], 0, 1e-9);
  EXPECT_NEAR(m.coeffs[1], 2, 1e-9);
  EXPECT_NEAR(m.coeffs[2], 0, 1e-9);
  EXPECT_NEAR(m.coeffs[3], 0, 1e-9);
}

TEST(Baseline, ConstantTargetAndErrors) {
  Rng rng(8);
  const auto s = random_image(rng, 200);
  const std::vector<double> t(200, 0.3);
  const CubicMap m = baseline_regress(s, t);
  for (double x : {0.0, 0.4, 1.0}) EXPECT_NEAR(m(x), 0.3, 1e-9);
  EXPECT_THROW(baseline_regress(std::vector<double>(50, 0.1), std::vector<double>(50, 0.1)), FitError);
  EXPECT_THROW(baseline_regress(std::vector<double>(200, 0.1), t), FitError);
}

TEST(Aggregate, Fixtures) {
  const auto one = aggregate(std::vector<double>{24.93});
  EXPECT_EQ(one.mean, 24.93);
  EXPECT_EQ(one.stddev, 0.0);
  EXPECT_EQ(one.n, 1u);
  const auto two = aggregate(std::vector<double>{20, 22});
  EXPECT_DOUBLE_EQ(two.mean, 21.0);
  EXPECT_DOUBLE_EQ(two.stddev, 1.4142135623730951);
  const auto three = aggregate(std::vector<double>{20, 21, 22});
  EXPECT_DOUBLE_EQ(three.stddev, 1.0);
  const auto skip = aggregate(std::vector<double>{20, kPsnrInfinite, 22});
  EXPECT_EQ(skip.n, 2u);
}

TEST(Evaluate, SelfComparisonAndErrors) {
  Volume v(3, 16, 16, Contrast::kT2w);
  Rng rng(9);
  for (double& x : v.voxels) x = rng.uniform();
  const MetricReport r = evaluate({v}, {v}, "T1->T2", "self");
  ASSERT_EQ(r.ssim.size(), 3u);
  for (double s : r.ssim) EXPECT_NEAR(s, 1.0, 1e-9);
  for (double p : r.psnr) EXPECT_EQ(p, kPsnrInfinite);
  EXPECT_EQ(r.excluded(), 3u);
  EXPECT_THROW(evaluate({}, {}, "t", "m"), DataError);
  Volume w(2, 16, 16);
  EXPECT_THROW(evaluate({v}, {w}, "t", "m"), DataError);
}

TEST(Report, SingleValueFormatting) {
  const std::vector<MetricReport> reports{cell("T1->T2", "pGAN", {24.93}, {0.9})};
  const std::string table = report_table(reports);
  EXPECT_NE(table.find("24.93 ± 0.00"), std::string::npos) << table;
  EXPECT_NE(table.find("0.900 ± 0.000"), std::string::npos) << table;
}

TEST(Report, TableLayoutIsStable) {
  const std::vector<MetricReport> reports{
      cell("T1->T2", "pGAN", {20, 22}, {0.9, 0.92}),
      cell("T1->T2", "copy", {10, 11}, {0.5, 0.6}),
      cell("T2->T1", "pGAN", {19, 21}, {0.8, 0.9}),
  };
  const std::string expected =
      "task    pGAN SSIM      pGAN PSNR     copy SSIM      copy PSNR     best SSIM  best PSNR\n"
      "--------------------------------------------------------------------------------------\n"
      "T1->T2  0.910 ± 0.014  21.00 ± 1.41  0.550 ± 0.071  10.50 ± 0.71  pGAN       pGAN\n"
      "T2->T1  0.850 ± 0.071  20.00 ± 1.41  -              -             pGAN       pGAN\n";
  EXPECT_EQ(report_table(reports), expected);
  EXPECT_EQ(emit_report(reports).table, emit_report(reports).table);
}

TEST(Report, CsvRoundTrip) {
  const std::vector<MetricReport> reports{cell("T1->T2", "pGAN", {20, 22}, {0.9, 0.92}),
                                          cell("T2->T1", "cGAN_reg", {18.5}, {0.7})};
  const std::string csv = report_csv(reports);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "task,method,metric,mean,std,n");
  const auto rows = parse_report_csv(csv, "mem");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].psnr.mean, 21.0);
  EXPECT_EQ(rows[1].ssim.n, 1u);
  EXPECT_EQ(report_csv(rows), csv);
  EXPECT_EQ(report_table(rows), report_table(reports));
  EXPECT_THROW(parse_report_csv("nonsense\n", "mem"), DataError);
  EXPECT_THROW(emit_report(std::vector<MetricReport>{}), DataError);
  EXPECT_THROW(report_csv(std::vector<MetricReport>{cell("a,b", "m", {1}, {1})}), UsageError);
}

TEST(NormalizeMax, UnitPeak) {
  Volume v(1, 2, 2);
  v.voxels = {0.1, 0.4, 0.2, 0.0};
  EXPECT_EQ(normalize_max(v).voxels, (std::vector<double>{0.25, 1.0, 0.5, 0.0}));
  Volume z(1, 2, 2);
  EXPECT_EQ(normalize_max(z).voxels, z.voxels);
}
