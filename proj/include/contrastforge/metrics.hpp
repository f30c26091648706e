// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "contrastforge/phantom.hpp"

namespace contrastforge {

/// Row-major 2-D view of one image.
struct ImageView {
  std::span<const double> pixels;
  std::size_t height = 0;
  std::size_t width = 0;
};

inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE). Identical images give kPsnrInfinite.
double psnr(std::span<const double> ref, std::span<const double> test, double peak = 1.0);

/// Same, restricted to pixels where mask != 0.
double psnr_masked(std::span<const double> ref, std::span<const double> test, std::span<const std::uint8_t> mask,
                   double peak = 1.0);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Gaussian-windowed SSIM averaged over a same-size map; borders use
/// symmetric (half-sample) reflection.
double ssim(const ImageView& ref, const ImageView& test, const SsimParams& params = {});

/// Normalized 1-D Gaussian taps of the SSIM window.
std::vector<double> gaussian_taps(std::size_t window, double sigma);

/// Least-squares cubic mapping target intensity from source intensity.
struct CubicMap {
  std::array<double, 4> coeffs{};  // c0 + c1 s + c2 s^2 + c3 s^3

  double operator()(double s) const { return coeffs[0] + s * (coeffs[1] + s * (coeffs[2] + s * coeffs[3])); }
};

/// Fits on pooled (source, target) pairs; needs >= 100 pairs and a full-rank
/// design matrix.
CubicMap baseline_regress(std::span<const double> source, std::span<const double> target);

/// Per-image quality for one (task, method) cell.
struct MetricReport {
  std::string task;
  std::string method;
  std::vector<double> psnr;  // dB; infinite entries are excluded from aggregates
  std::vector<double> ssim;

  struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // sample std (n - 1); 0 when n == 1
    std::size_t n = 0;
  };
  Aggregate psnr_stats() const;
  Aggregate ssim_stats() const;
  std::size_t excluded() const;
};

MetricReport::Aggregate aggregate(std::span<const double> values);

/// Rescales so the maximum intensity is 1 (all-zero volumes are left alone).
Volume normalize_max(const Volume& v);

/// Slice-wise PSNR and SSIM of `predicted` against `reference`, after both are
/// scaled to unit maximum. Throws DataError on empty input or slice mismatch.
MetricReport evaluate(const std::vector<Volume>& predicted, const std::vector<Volume>& reference,
                      const std::string& task, const std::string& method);

/// Aggregates of one (task, method) cell; what the report files carry.
struct ReportRow {
  std::string task;
  std::string method;
  MetricReport::Aggregate ssim;
  MetricReport::Aggregate psnr;
};

std::vector<ReportRow> report_rows(std::span<const MetricReport> reports);

/// CSV with header task,method,metric,mean,std,n.
std::string report_csv(std::span<const ReportRow> rows);
std::string report_csv(std::span<const MetricReport> reports);

/// Reads CSV written by report_csv; throws DataError on malformed input.
std::vector<ReportRow> parse_report_csv(const std::string& text, const std::string& origin);

/// Aligned text table: one row per task, an SSIM and a PSNR column per
/// method, "mean ± std" cells, and final columns naming the best method.
std::string report_table(std::span<const ReportRow> rows);
std::string report_table(std::span<const MetricReport> reports);

struct ReportFiles {
  std::string csv;
  std::string table;
};
ReportFiles emit_report(std::span<const MetricReport> reports);

}  // namespace contrastforge
