/**
 * @file features.hpp
 * @brief The eight per-melody feature columns and the 11-column feature table.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "emogen/render.hpp"
#include "emogen/score.hpp"
#include "emogen/transform.hpp"

namespace emogen {

/// Duration-weighted mean pitch.
inline double avg_pitch(const Melody& melody) {
  if (melody.empty()) throw EmptyMelody();
  Rational weighted{0};
  Rational total{0};
  for (const auto& n : melody) {
    weighted += n.duration * n.pitch;
    total += n.duration;
  }
  return to_double(weighted / total);
}

/// Duration-weighted standard deviation of pitch around avg_pitch.
inline double pitch_sd(const Melody& melody) {
  if (melody.empty()) throw EmptyMelody();
  // Exact rational moments, so equal pitches give exactly zero; only the square root is inexact.
  Rational total{0};
  Rational first{0};
  Rational second{0};
  for (const auto& n : melody) {
    total += n.duration;
    first += n.duration * n.pitch;
    second += n.duration * (n.pitch * n.pitch);
  }
  const Rational mean = first / total;
  return std::sqrt(to_double(second / total - mean * mean));
}

enum class Direction { descending = 0, ascending = 1 };

/// Compares the summed durations of notes reached by a rising vs a falling step.
/// Each pair credits the arrival note's duration; a tie goes to descending.
inline Direction direction(const Melody& melody) {
  if (melody.empty()) throw EmptyMelody();
  Rational up{0};
  Rational down{0};
  for (std::size_t i = 1; i < melody.size(); ++i) {
    if (melody[i].pitch > melody[i - 1].pitch) up += melody[i].duration;
    else if (melody[i].pitch < melody[i - 1].pitch) down += melody[i].duration;
  }
  return up > down ? Direction::ascending : Direction::descending;
}

inline int pitch_range(const Melody& melody) {
  if (melody.empty()) throw EmptyMelody();
  const auto [lo, hi] = std::minmax_element(melody.begin(), melody.end(),
                                            [](const MelodyNote& a, const MelodyNote& b) { return a.pitch < b.pitch; });
  return hi->pitch - lo->pitch;
}

struct FeatureVector {
  int key = 0;  // tonic pitch class, index into kKeyLabels
  int mode = 1;
  double tempo = kDefaultTempo;
  Direction direction = Direction::descending;
  double avg_pitch = 0.0;
  int pitch_range = 0;
  double pitch_sd = 0.0;
  double rms = 0.0;
};

inline FeatureVector extract_features(const Score& score) {
  const Melody melody = extract_melody(score);
  FeatureVector f;
  f.key = score.key.tonic_pitch_class();
  f.mode = mode_class(score.key.mode);
  f.tempo = score.tempo_bpm.value_or(kDefaultTempo);
  f.direction = direction(melody);
  f.avg_pitch = avg_pitch(melody);
  f.pitch_range = pitch_range(melody);
  f.pitch_sd = pitch_sd(melody);
  f.rms = rms(synthesize(PerformanceScore::from(score)));
  return f;
}

/// One row of the analysis table: quadrant (1-4), binary valence/arousal, features.
struct FeatureRow {
  int quadrant = 1;
  int valence = 1;
  int arousal = 1;
  FeatureVector features;
};

inline constexpr const char* kFeatureTableHeader =
    "label,valence,arousal,key,mode,direction,avg_pitch,pitch_range,pitch_sd,tempo,rms";

inline std::string format_feature_row(const FeatureRow& r) {
  std::ostringstream os;
  os.precision(17);
  const auto& f = r.features;
  os << 'Q' << r.quadrant << ',' << r.valence << ',' << r.arousal << ',' << f.key << ',' << f.mode << ','
     << static_cast<int>(f.direction) << ',' << f.avg_pitch << ',' << f.pitch_range << ',' << f.pitch_sd << ','
     << f.tempo << ',' << f.rms;
  return os.str();
}

inline std::string write_feature_table(const std::vector<FeatureRow>& rows) {
  std::string out = std::string(kFeatureTableHeader) + "\n";
  for (const auto& r : rows) out += format_feature_row(r) + "\n";
  return out;
}

namespace table_detail {

inline double to_number(const std::string& cell, std::size_t line, const char* column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw MalformedTable("line " + std::to_string(line) + ": column " + column + " is not a number: '" + cell + "'");
  }
}

inline int key_index(const std::string& cell, std::size_t line) {
  for (std::size_t i = 0; i < kKeyLabels.size(); ++i)
    if (cell == kKeyLabels[i]) return static_cast<int>(i);
  if (cell == "G#" || cell == "Ab") return 8;
  if (cell == "Db") return 1;
  if (cell == "D#") return 3;
  if (cell == "Gb") return 6;
  if (cell == "A#") return 10;
  const double v = to_number(cell, line, "key");
  if (v != std::floor(v) || v < 0 || v > 11) throw MalformedTable("line " + std::to_string(line) + ": key out of range");
  return static_cast<int>(v);
}

inline int binary(const std::string& cell, std::size_t line, const char* column) {
  const double v = to_number(cell, line, column);
  if (v != 0.0 && v != 1.0)
    throw MalformedTable("line " + std::to_string(line) + ": column " + column + " must be 0 or 1");
  return static_cast<int>(v);
}

}  // namespace table_detail

/// Reads the 11-column table. A header row is optional; the label column accepts
/// "Q1".."Q4" or 1..4; the key column accepts a pitch-class name or index.
inline std::vector<FeatureRow> read_feature_table(const std::string& text) {
  using namespace table_detail;
  std::vector<FeatureRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\"");
      const auto e = cell.find_last_not_of(" \t\"");
      cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 11)
      throw MalformedTable("line " + std::to_string(number) + ": expected 11 columns, found " + std::to_string(cells.size()));
    if (rows.empty() && cells[0] == "label") continue;

    FeatureRow r;
    std::string label = cells[0];
    if (!label.empty() && (label[0] == 'Q' || label[0] == 'q')) label.erase(0, 1);
    const double q = to_number(label, number, "label");
    if (q != std::floor(q) || q < 1 || q > 4) throw MalformedTable("line " + std::to_string(number) + ": label must be Q1-Q4");
    r.quadrant = static_cast<int>(q);
    r.valence = binary(cells[1], number, "valence");
    r.arousal = binary(cells[2], number, "arousal");
    r.features.key = key_index(cells[3], number);
    r.features.mode = binary(cells[4], number, "mode");
    r.features.direction = static_cast<Direction>(binary(cells[5], number, "direction"));
    r.features.avg_pitch = to_number(cells[6], number, "avg_pitch");
    r.features.pitch_range = static_cast<int>(to_number(cells[7], number, "pitch_range"));
    r.features.pitch_sd = to_number(cells[8], number, "pitch_sd");
    r.features.tempo = to_number(cells[9], number, "tempo");
    r.features.rms = to_number(cells[10], number, "rms");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace emogen
