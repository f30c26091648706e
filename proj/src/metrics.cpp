// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/metrics.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "contrastforge/errors.hpp"
#include "contrastforge/ini.hpp"

namespace contrastforge {
namespace {

// Mirror index with edge repetition: -1 -> 0, -2 -> 1, n -> n-1.
std::size_t mirror(long i, std::size_t n) {
  const long len = static_cast<long>(n);
  while (i < 0 || i >= len) {
    if (i < 0) i = -i - 1;
    if (i >= len) i = 2 * len - i - 1;
  }
  return static_cast<std::size_t>(i);
}

// Separable Gaussian filter with symmetric borders; output has input size.
std::vector<double> filter(const std::vector<double>& img, std::size_t h, std::size_t w,
                           const std::vector<double>& taps) {
  const long half = static_cast<long>(taps.size() / 2);
  std::vector<double> rows(h * w), out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < taps.size(); ++t) {
        s += taps[t] * img[y * w + mirror(static_cast<long>(x) + static_cast<long>(t) - half, w)];
      }
      rows[y * w + x] = s;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < taps.size(); ++t) {
        s += taps[t] * rows[mirror(static_cast<long>(y) + static_cast<long>(t) - half, h) * w + x];
      }
      out[y * w + x] = s;
    }
  }
  return out;
}

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string pad_right(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

template <typename Row, typename T>
std::vector<T> unique_in_order(std::span<const Row> reports, T Row::*field) {
  std::vector<T> out;
  for (const auto& r : reports) {
    if (std::find(out.begin(), out.end(), r.*field) == out.end()) out.push_back(r.*field);
  }
  return out;
}

}  // namespace

double psnr(std::span<const double> ref, std::span<const double> test, double peak) {
  if (ref.size() != test.size() || ref.empty()) throw UsageError("psnr: images must be non-empty and equal in size");
  if (!(peak > 0.0)) throw UsageError("psnr: peak must be positive");
  double sse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) sse += (ref[i] - test[i]) * (ref[i] - test[i]);
  if (sse == 0.0) return kPsnrInfinite;
  const double mse = sse / static_cast<double>(ref.size());
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr_masked(std::span<const double> ref, std::span<const double> test, std::span<const std::uint8_t> mask,
                   double peak) {
  if (ref.size() != test.size() || ref.size() != mask.size()) throw UsageError("psnr_masked: size mismatch");
  std::vector<double> a, b;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (mask[i]) {
      a.push_back(ref[i]);
      b.push_back(test[i]);
    }
  }
  if (a.empty()) throw UsageError("psnr_masked: empty mask");
  return psnr(a, b, peak);
}

std::vector<double> gaussian_taps(std::size_t window, double sigma) {
  std::vector<double> taps(window);
  const double center = (static_cast<double>(window) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double d = static_cast<double>(i) - center;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

double ssim(const ImageView& ref, const ImageView& test, const SsimParams& p) {
  if (ref.height != test.height || ref.width != test.width) throw UsageError("ssim: image sizes differ");
  if (ref.pixels.size() != ref.height * ref.width || test.pixels.size() != test.height * test.width) {
    throw UsageError("ssim: pixel count does not match dimensions");
  }
  if (ref.height < p.window || ref.width < p.window) {
    throw UsageError("ssim: image smaller than the " + std::to_string(p.window) + "x" + std::to_string(p.window) +
                     " window");
  }
  const std::size_t h = ref.height, w = ref.width, n = h * w;
  const auto taps = gaussian_taps(p.window, p.sigma);
  std::vector<double> x(ref.pixels.begin(), ref.pixels.end()), y(test.pixels.begin(), test.pixels.end());
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mu_x = filter(x, h, w, taps), mu_y = filter(y, h, w, taps);
  const auto e_xx = filter(xx, h, w, taps), e_yy = filter(yy, h, w, taps), e_xy = filter(xy, h, w, taps);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double var_x = e_xx[i] - mu_x[i] * mu_x[i];
    const double var_y = e_yy[i] - mu_y[i] * mu_y[i];
    const double cov = e_xy[i] - mu_x[i] * mu_y[i];
    total += ((2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2)) /
             ((mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (var_x + var_y + c2));
  }
  return total / static_cast<double>(n);
}

CubicMap baseline_regress(std::span<const double> source, std::span<const double> target) {
  if (source.size() != target.size()) throw UsageError("baseline_regress: source/target size mismatch");
  if (source.size() < 100) throw FitError("baseline_regress: need at least 100 sample pixels");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(source.size()), 4);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(source.size()));
  for (std::size_t i = 0; i < source.size(); ++i) {
    const double s = source[i];
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = 1.0;
    design(r, 1) = s;
    design(r, 2) = s * s;
    design(r, 3) = s * s * s;
    rhs(r) = target[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 4) throw FitError("baseline_regress: degenerate design matrix (too few distinct intensities)");
  const Eigen::VectorXd c = qr.solve(rhs);
  CubicMap map;
  for (int i = 0; i < 4; ++i) map.coeffs[static_cast<std::size_t>(i)] = c(i);
  return map;
}

MetricReport::Aggregate aggregate(std::span<const double> values) {
  MetricReport::Aggregate a;
  double total = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    total += v;
    ++a.n;
  }
  if (a.n == 0) return a;
  a.mean = total / static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) {
      if (std::isfinite(v)) ss += (v - a.mean) * (v - a.mean);
    }
    a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

MetricReport::Aggregate MetricReport::psnr_stats() const { return aggregate(psnr); }
MetricReport::Aggregate MetricReport::ssim_stats() const { return aggregate(ssim); }

std::size_t MetricReport::excluded() const {
  return static_cast<std::size_t>(std::count_if(psnr.begin(), psnr.end(), [](double v) { return !std::isfinite(v); }));
}

Volume normalize_max(const Volume& v) {
  Volume out = v;
  const double peak = v.voxels.empty() ? 0.0 : *std::max_element(v.voxels.begin(), v.voxels.end());
  if (peak > 0.0) {
    for (double& s : out.voxels) s /= peak;
  }
  return out;
}

MetricReport evaluate(const std::vector<Volume>& predicted, const std::vector<Volume>& reference,
                      const std::string& task, const std::string& method) {
  if (predicted.empty() || reference.empty()) throw DataError("evaluate: empty test set");
  if (predicted.size() != reference.size()) {
    throw DataError("evaluate: " + std::to_string(predicted.size()) + " predicted volumes vs " +
                    std::to_string(reference.size()) + " references");
  }
  MetricReport report;
  report.task = task;
  report.method = method;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!predicted[i].same_dims(reference[i])) {
      throw DataError("evaluate: slice count or size mismatch for volume " + std::to_string(i));
    }
    const Volume p = normalize_max(predicted[i]);
    const Volume r = normalize_max(reference[i]);
    for (std::size_t z = 0; z < p.depth; ++z) {
      report.psnr.push_back(psnr(r.slice(z), p.slice(z)));
      report.ssim.push_back(ssim({r.slice(z), r.height, r.width}, {p.slice(z), p.height, p.width}));
    }
  }
  if (const std::size_t skipped = report.excluded(); skipped > 0) {
    std::cerr << "warning: " << task << "/" << method << ": " << skipped
              << " slice(s) identical to reference (infinite PSNR) excluded from PSNR aggregate\n";
  }
  return report;
}

std::vector<ReportRow> report_rows(std::span<const MetricReport> reports) {
  std::vector<ReportRow> rows;
  for (const auto& r : reports) rows.push_back({r.task, r.method, r.ssim_stats(), r.psnr_stats()});
  return rows;
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = "task,method,metric,mean,std,n\n";
  for (const auto& r : rows) {
    if (r.task.find(',') != std::string::npos || r.method.find(',') != std::string::npos) {
      throw UsageError("report_csv: task and method labels may not contain commas");
    }
    out += fmt::format("{},{},ssim,{:.6f},{:.6f},{}\n", r.task, r.method, r.ssim.mean, r.ssim.stddev, r.ssim.n);
    out += fmt::format("{},{},psnr,{:.6f},{:.6f},{}\n", r.task, r.method, r.psnr.mean, r.psnr.stddev, r.psnr.n);
  }
  return out;
}

std::string report_csv(std::span<const MetricReport> reports) { return report_csv(report_rows(reports)); }

std::vector<ReportRow> parse_report_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "task,method,metric,mean,std,n") {
    throw DataError(origin + ": not a metric CSV (bad header)");
  }
  std::vector<ReportRow> rows;
  auto cell = [&](const std::string& task, const std::string& method) -> ReportRow& {
    for (auto& r : rows) {
      if (r.task == task && r.method == method) return r;
    }
    rows.push_back({task, method, {}, {}});
    return rows.back();
  };
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    const std::string where = origin + ":" + std::to_string(line_no);
    if (f.size() != 6) throw DataError(where + ": expected 6 fields");
    MetricReport::Aggregate a;
    try {
      a.mean = ini::parse_double(f[3], where);
      a.stddev = ini::parse_double(f[4], where);
      a.n = static_cast<std::size_t>(ini::parse_u64(f[5], where));
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
    ReportRow& r = cell(f[0], f[1]);
    if (f[2] == "ssim") {
      r.ssim = a;
    } else if (f[2] == "psnr") {
      r.psnr = a;
    } else {
      throw DataError(where + ": unknown metric '" + f[2] + "'");
    }
  }
  return rows;
}

std::string report_table(std::span<const MetricReport> reports) { return report_table(report_rows(reports)); }

std::string report_table(std::span<const ReportRow> reports) {
  const auto tasks = unique_in_order(reports, &ReportRow::task);
  const auto methods = unique_in_order(reports, &ReportRow::method);
  auto find = [&](const std::string& task, const std::string& method) -> const ReportRow* {
    for (const auto& r : reports) {
      if (r.task == task && r.method == method) return &r;
    }
    return nullptr;
  };
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"task"};
  for (const auto& m : methods) {
    header.push_back(m + " SSIM");
    header.push_back(m + " PSNR");
  }
  header.push_back("best SSIM");
  header.push_back("best PSNR");
  rows.push_back(header);

  for (const auto& task : tasks) {
    std::vector<std::string> row{task};
    std::string best_ssim = "-", best_psnr = "-";
    double top_ssim = -std::numeric_limits<double>::infinity(), top_psnr = top_ssim;
    for (const auto& m : methods) {
      const ReportRow* r = find(task, m);
      if (r == nullptr) {
        row.push_back("-");
        row.push_back("-");
        continue;
      }
      const auto &s = r->ssim, &p = r->psnr;
      row.push_back(fmt::format("{:.3f} ± {:.3f}", s.mean, s.stddev));
      row.push_back(fmt::format("{:.2f} ± {:.2f}", p.mean, p.stddev));
      if (s.n > 0 && s.mean > top_ssim) {
        top_ssim = s.mean;
        best_ssim = m;
      }
      if (p.n > 0 && p.mean > top_psnr) {
        top_psnr = p.mean;
        best_psnr = m;
      }
    }
    row.push_back(best_ssim);
    row.push_back(best_psnr);
    rows.push_back(row);
  }

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      line += c + 1 == rows[r].size() ? rows[r][c] : pad_right(rows[r][c], widths[c]) + "  ";
    }
    out += line + '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 == widths.size() ? 0 : 2);
      out += std::string(total, '-') + '\n';
    }
  }
  return out;
}

ReportFiles emit_report(std::span<const MetricReport> reports) {
  if (reports.empty()) throw DataError("emit_report: no reports");
  const auto rows = report_rows(reports);
  return {report_csv(rows), report_table(rows)};
}

}  // namespace contrastforge
