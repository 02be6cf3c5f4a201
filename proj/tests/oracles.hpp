// Straightforward reference implementations that the library results are checked against.
#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "emogen/features.hpp"
#include "emogen/labeling.hpp"
#include "smf_reader.hpp"

namespace oracle {

using emogen::Melody;
using emogen::to_double;

inline double mean_pitch(const Melody& m) {
  double num = 0;
  double den = 0;
  for (const auto& n : m) {
    num += n.pitch * to_double(n.duration);
    den += to_double(n.duration);
  }
  return num / den;
}

inline double pitch_spread(const Melody& m) {
  const double mu = mean_pitch(m);
  double num = 0;
  double den = 0;
  for (const auto& n : m) {
    num += to_double(n.duration) * (n.pitch - mu) * (n.pitch - mu);
    den += to_double(n.duration);
  }
  return std::sqrt(num / den);
}

// Walks the melody pair by pair, tallying rising and falling arrivals.
inline emogen::Direction direction(const Melody& m) {
  double rising = 0;
  double falling = 0;
  int previous = m.front().pitch;
  for (std::size_t i = 1; i < m.size(); ++i) {
    if (m[i].pitch > previous) rising += to_double(m[i].duration);
    if (m[i].pitch < previous) falling += to_double(m[i].duration);
    previous = m[i].pitch;
  }
  return rising > falling ? emogen::Direction::ascending : emogen::Direction::descending;
}

// Textbook computational formula in long double.
inline double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

// Two-sided tail of Student's t by Simpson integration of the density over [0, |t|].
inline double pearson_p(double r, std::size_t n) {
  const double nu = static_cast<double>(n) - 2.0;
  const double t = std::abs(r) * std::sqrt(nu / (1.0 - r * r));
  const double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * std::numbers::pi);
  const auto f = [&](double u) { return c * std::pow(1.0 + u * u / nu, -(nu + 1) / 2); };
  const int steps = 20000;
  const double h = t / steps;
  double sum = f(0) + f(t);
  for (int i = 1; i < steps; ++i) sum += f(i * h) * (i % 2 ? 4 : 2);
  return 1.0 - 2.0 * sum * h / 3.0;
}

// Full-matrix edit distance.
inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] != b[j - 1]);
      d[i][j] = std::min(sub, std::min(d[i - 1][j], d[i][j - 1]) + 1);
    }
  return d[a.size()][b.size()];
}

// Order-k additive smoothing computed straight from the documents, without bar-position state.
inline double cross_entropy(const std::vector<emogen::DatasetRecord>& train,
                            const std::vector<emogen::DatasetRecord>& eval, int k, double alpha) {
  const auto doc_of = [](const emogen::DatasetRecord& r) { return r.control_code + '\x1f' + r.abc + '\x03'; };
  std::set<char> alphabet;
  for (const auto& r : train)
    for (char c : r.abc + '\x03') alphabet.insert(c);
  const double v = static_cast<double>(alphabet.size()) + 1.0;  // plus the unknown slot
  std::map<std::string, std::map<char, double>> counts;
  std::map<std::string, double> totals;
  const auto context = [&](const emogen::DatasetRecord& r, const std::string& doc, std::size_t pos) {
    std::string ctx = std::to_string(r.label.quadrant);
    for (int j = k; j >= 1; --j) ctx += pos >= static_cast<std::size_t>(j) ? doc[pos - static_cast<std::size_t>(j)] : '\x02';
    return ctx;
  };
  for (const auto& r : train) {
    const std::string doc = doc_of(r);
    for (std::size_t pos = r.control_code.size() + 1; pos < doc.size(); ++pos) {
      const std::string ctx = context(r, doc, pos);
      counts[ctx][doc[pos]] += 1;
      totals[ctx] += 1;
    }
  }
  double nll = 0;
  double n = 0;
  for (const auto& r : eval) {
    const std::string doc = doc_of(r);
    for (std::size_t pos = r.control_code.size() + 1; pos < doc.size(); ++pos) {
      const std::string ctx = context(r, doc, pos);
      double p = 1.0 / v;
      if (totals.count(ctx)) {
        // A character never seen in training falls in the unknown slot, which has no counts.
        const bool known = alphabet.count(doc[pos]) != 0;
        const double c = known && counts[ctx].count(doc[pos]) ? counts[ctx][doc[pos]] : 0.0;
        p = (c + alpha) / (totals[ctx] + alpha * v);
      }
      nll -= std::log(p);
      n += 1;
    }
  }
  return nll / n;
}

// Sounding events with ties merged, in ticks at 480 per quarter.
inline std::vector<smf::NoteEvent> midi_notes(const emogen::Score& s, int velocity) {
  std::vector<smf::NoteEvent> out;
  emogen::Rational t{0};
  bool joined = false;
  const auto ticks = [](emogen::Rational q) {
    q *= 480;
    return q.numerator() / q.denominator();
  };
  for (const auto& m : s.measures)
    for (const auto& n : m.notes) {
      const emogen::Rational start = t;
      t += n.duration;
      if (n.is_rest()) {
        joined = false;
        continue;
      }
      if (joined && out.back().pitch == n.pitch->midi()) out.back().off = ticks(t);
      else out.push_back({n.pitch->midi(), ticks(start), ticks(t), velocity});
      joined = n.tie_to_next;
    }
  return out;
}

}  // namespace oracle
