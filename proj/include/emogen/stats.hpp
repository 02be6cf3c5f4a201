/**
 * @file stats.hpp
 * @brief Pearson correlation with two-sided p-values, Gaussian KDE, and the
 *        emotion-versus-feature correlation report.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "emogen/features.hpp"

namespace emogen {

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool significant = false;  // p < 0.05
};

inline constexpr double kSignificanceLevel = 0.05;

/// Two-sided p-value of a Pearson coefficient under a Student-t law with n-2 degrees of freedom.
inline double pearson_p_value(double r, std::size_t n) {
  const double df = static_cast<double>(n) - 2.0;
  const double r2 = r * r;
  if (r2 >= 1.0) return 0.0;
  const double t2 = df * r2 / (1.0 - r2);
  // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
  const double x = df / (df + t2);
  return std::clamp(boost::math::ibeta(df / 2.0, 0.5, x), 0.0, 1.0);
}

inline CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("series lengths differ: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  const std::size_t n = x.size();
  if (n < 3) throw DegenerateSeries("pearson needs at least 3 samples, got " + std::to_string(n));
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateSeries("pearson input series is constant");
  CorrelationResult out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  out.p_value = pearson_p_value(out.r, n);
  out.significant = out.p_value < kSignificanceLevel;
  return out;
}

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

/// Linear-interpolated quantile of sorted data (the "type 7" definition).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Silverman's rule: 0.9 * min(sd, IQR/1.34) * n^(-1/5); falls back to sd when the IQR is zero.
inline double silverman_bandwidth(std::span<const double> samples) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

/// Gaussian KDE evaluated on `grid_size` evenly spaced points over [min-4h, max+4h].
inline KdeCurve kde(std::span<const double> samples, std::size_t grid_size) {
  if (samples.size() < 2) throw DegenerateSeries("kde needs at least 2 samples");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  if (*lo_it == *hi_it) throw DegenerateSeries("kde input series is constant");
  if (grid_size < 2) throw DegenerateSeries("kde grid needs at least 2 points");
  KdeCurve curve;
  curve.bandwidth = silverman_bandwidth(samples);
  const double h = curve.bandwidth;
  const double lo = *lo_it - 4.0 * h;
  const double hi = *hi_it + 4.0 * h;
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  curve.grid.resize(grid_size);
  curve.density.resize(grid_size);
  for (std::size_t g = 0; g < grid_size; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_size - 1);
    double sum = 0.0;
    for (double s : samples) {
      const double z = (x - s) / h;
      sum += std::exp(-0.5 * z * z);
    }
    curve.grid[g] = x;
    curve.density[g] = sum * norm;
  }
  return curve;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return area;
}

enum class FeatureColumn { key, mode, tempo, direction, avg_pitch, pitch_range, pitch_sd, rms };

inline constexpr std::array<FeatureColumn, 8> kReportFeatures{
    FeatureColumn::key,       FeatureColumn::mode,        FeatureColumn::tempo,    FeatureColumn::direction,
    FeatureColumn::avg_pitch, FeatureColumn::pitch_range, FeatureColumn::pitch_sd, FeatureColumn::rms};

/// The six multi-valued features drawn as density curves; mode and direction are binary.
inline constexpr std::array<FeatureColumn, 6> kKdeFeatures{FeatureColumn::key,         FeatureColumn::tempo,
                                                           FeatureColumn::avg_pitch,   FeatureColumn::pitch_range,
                                                           FeatureColumn::pitch_sd,    FeatureColumn::rms};

inline const char* feature_name(FeatureColumn c) {
  switch (c) {
    case FeatureColumn::key: return "Key";
    case FeatureColumn::mode: return "Mode";
    case FeatureColumn::tempo: return "Tempo";
    case FeatureColumn::direction: return "Direction";
    case FeatureColumn::avg_pitch: return "Avg pitch";
    case FeatureColumn::pitch_range: return "Pitch range";
    case FeatureColumn::pitch_sd: return "PitchSD";
    case FeatureColumn::rms: return "RMS";
  }
  return "";
}

inline double feature_value(const FeatureVector& f, FeatureColumn c) {
  switch (c) {
    case FeatureColumn::key: return f.key;
    case FeatureColumn::mode: return f.mode;
    case FeatureColumn::tempo: return f.tempo;
    case FeatureColumn::direction: return static_cast<int>(f.direction);
    case FeatureColumn::avg_pitch: return f.avg_pitch;
    case FeatureColumn::pitch_range: return f.pitch_range;
    case FeatureColumn::pitch_sd: return f.pitch_sd;
    case FeatureColumn::rms: return f.rms;
  }
  return 0.0;
}

inline constexpr double kWeakCorrelation = 0.2;

struct ReportRow {
  std::string emotion;  // "Valence" or "Arousal"
  FeatureColumn feature;
  CorrelationResult result;
  bool defined = true;  // false when one of the two columns is constant

  std::string relevance() const {
    if (!defined) return "Undefined";
    const std::string sign = result.r >= 0.0 ? "positive" : "negative";
    if (std::abs(result.r) < kWeakCorrelation) return "Weak " + sign;
    return std::string(1, static_cast<char>(std::toupper(sign[0]))) + sign.substr(1);
  }
};

/// Pearson statistics of valence and arousal against each of the eight features (16 rows).
/// With `allow_constant`, a constant column yields an undefined row instead of DegenerateSeries.
inline std::vector<ReportRow> correlation_report(const std::vector<FeatureRow>& table, bool allow_constant = false) {
  if (table.size() < 3) throw DegenerateSeries("pearson needs at least 3 samples, got " + std::to_string(table.size()));
  std::vector<double> valence;
  std::vector<double> arousal;
  for (const auto& r : table) {
    valence.push_back(r.valence);
    arousal.push_back(r.arousal);
  }
  std::vector<ReportRow> rows;
  for (const auto& [emotion, series] : {std::pair<const char*, const std::vector<double>*>{"Valence", &valence},
                                        std::pair<const char*, const std::vector<double>*>{"Arousal", &arousal}}) {
    for (FeatureColumn c : kReportFeatures) {
      std::vector<double> column;
      column.reserve(table.size());
      for (const auto& r : table) column.push_back(feature_value(r.features, c));
      try {
        rows.push_back({emotion, c, pearson(*series, column)});
      } catch (const DegenerateSeries&) {
        if (!allow_constant) throw;
        rows.push_back({emotion, c, CorrelationResult{std::nan(""), std::nan(""), table.size(), false}, false});
      }
    }
  }
  return rows;
}

inline std::string format_p(double p) {
  if (std::isnan(p)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", p);
  return buf;
}

inline std::string format_r(double r) {
  if (std::isnan(r)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.4f", r);
  return buf;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "emotion,feature,r,relevance,p_value,significant,n\n";
  for (const auto& row : rows) {
    char p[40];
    std::snprintf(p, sizeof p, "%.17g", row.result.p_value);
    char r[40];
    std::snprintf(r, sizeof r, "%.17g", row.result.r);
    out += row.emotion + "," + feature_name(row.feature) + "," + r + "," + row.relevance() + "," + p + "," +
           (row.result.significant ? "1" : "0") + "," + std::to_string(row.result.n) + "\n";
  }
  return out;
}

inline std::string report_text(const std::vector<ReportRow>& rows) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof line, "%-8s %-12s %-12s %-14s %-10s %s\n", "Emotion", "Feature", "Correlation", "Relevance",
                "P-value", "Confidence level");
  out += line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof line, "%-8s %-12s %-12s %-14s %-10s %s\n", row.emotion.c_str(), feature_name(row.feature),
                  format_r(row.result.r).c_str(), row.relevance().c_str(), format_p(row.result.p_value).c_str(),
                  !row.defined ? "constant column" : row.result.significant ? "p<0.05 significant" : "p>=0.05 insignificant");
    out += line;
  }
  return out;
}

}  // namespace emogen
