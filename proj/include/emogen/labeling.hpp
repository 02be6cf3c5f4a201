/**
 * @file labeling.hpp
 * @brief Quadrant labels, proxy auto-labeling, control codes, dataset records,
 *        Q2/Q3 augmentation and the stratified train/test split.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emogen/abc.hpp"
#include "emogen/features.hpp"
#include "emogen/rng.hpp"
#include "emogen/transform.hpp"

namespace emogen {

struct QuadrantLabel {
  int quadrant = 1;  // 1..4
  bool valence_high = true;
  bool arousal_high = true;

  static QuadrantLabel from_bits(bool valence_high, bool arousal_high) {
    const int idx = (!valence_high && arousal_high) * 1 + (!valence_high && !arousal_high) * 2 +
                    (valence_high && !arousal_high) * 3;
    return {idx + 1, valence_high, arousal_high};
  }

  static QuadrantLabel from_quadrant(int q) {
    switch (q) {
      case 1: return {1, true, true};
      case 2: return {2, false, true};
      case 3: return {3, false, false};
      case 4: return {4, true, false};
      default: throw RangeError("quadrant must be 1-4, got " + std::to_string(q));
    }
  }

  /// Accepts "Q1".."Q4" (case-insensitive) or "1".."4".
  static QuadrantLabel parse(std::string_view text) {
    if (!text.empty() && (text[0] == 'Q' || text[0] == 'q')) text.remove_prefix(1);
    if (text.size() != 1 || text[0] < '1' || text[0] > '4') throw FormatError("invalid quadrant label '" + std::string(text) + "'");
    return from_quadrant(text[0] - '0');
  }

  std::string name() const { return "Q" + std::to_string(quadrant); }
  friend bool operator==(const QuadrantLabel&, const QuadrantLabel&) = default;
};

/// Quadrant of a valence/arousal point; zero counts as high on both axes.
inline QuadrantLabel map_quadrant(double valence, double arousal) {
  const int v_low = valence < 0.0;
  const int a_low = arousal < 0.0;
  const int idx = v_low * (1 - a_low) + 2 * v_low * a_low + 3 * (1 - v_low) * a_low;
  return QuadrantLabel::from_quadrant(idx + 1);
}

/// Mode stands in for valence and pitch_sd (against a threshold) for arousal.
inline QuadrantLabel rough_label(const Score& score, double pitch_sd_threshold) {
  const Melody melody = extract_melody(score);
  return QuadrantLabel::from_bits(mode_class(score.key.mode) == 1, pitch_sd(melody) >= pitch_sd_threshold);
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw EmptyCorpus("median of an empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

/// Median pitch_sd over the corpus.
inline double compute_threshold(const std::vector<Score>& corpus) {
  if (corpus.empty()) throw EmptyCorpus("cannot compute a threshold over an empty corpus");
  std::vector<double> values;
  values.reserve(corpus.size());
  for (const auto& s : corpus) values.push_back(pitch_sd(extract_melody(s)));
  return median(std::move(values));
}

struct ControlCode {
  int sections = 1;
  int bars = 1;
  int similarity = 10;
  int first_section_bars = 1;

  friend bool operator==(const ControlCode&, const ControlCode&) = default;
};

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// 1 - distance / longer length, exact; two empty strings are identical.
inline Rational levenshtein_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return Rational(1);
  return Rational(static_cast<std::int64_t>(longest - levenshtein(a, b)), static_cast<std::int64_t>(longest));
}

/// Note text of each section, barlines omitted.
inline std::vector<std::string> section_texts(const Score& score) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  for (std::size_t end : score.section_boundaries()) {
    out.push_back(serialize_measures(score, begin, end + 1, false));
    begin = end + 1;
  }
  return out;
}

inline ControlCode control_code(const Score& score) {
  ControlCode code;
  const auto bounds = score.section_boundaries();
  code.sections = static_cast<int>(std::max<std::size_t>(bounds.size(), 1));
  code.bars = static_cast<int>(score.measures.size());
  code.first_section_bars = bounds.empty() ? code.bars : static_cast<int>(bounds.front() + 1);
  if (bounds.size() < 2) {
    code.similarity = 10;
    return code;
  }
  const auto texts = section_texts(score);
  Rational total{0};
  for (std::size_t i = 1; i < texts.size(); ++i) total += levenshtein_similarity(texts[i - 1], texts[i]);
  const Rational decile = total * 10 / static_cast<std::int64_t>(texts.size() - 1);
  code.similarity = static_cast<int>(decile.numerator() / decile.denominator());
  return code;
}

/// "Q<k> S:<S> B:<B> E:<E> D:<D>"
inline std::string format_control_code(const QuadrantLabel& label, const ControlCode& code) {
  return label.name() + " S:" + std::to_string(code.sections) + " B:" + std::to_string(code.bars) +
         " E:" + std::to_string(code.similarity) + " D:" + std::to_string(code.first_section_bars);
}

struct LabeledCode {
  QuadrantLabel label;
  ControlCode code;
};

inline LabeledCode parse_control_code(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string q;
  std::string s;
  std::string b;
  std::string e;
  std::string d;
  std::string extra;
  if (!(in >> q >> s >> b >> e >> d) || (in >> extra)) throw FormatError("malformed control code '" + std::string(text) + "'");
  const auto field = [&](const std::string& tok, const char* name) {
    const std::string prefix = std::string(name) + ":";
    if (tok.rfind(prefix, 0) != 0) throw FormatError("control code field '" + tok + "' should start with " + prefix);
    const std::string digits = tok.substr(prefix.size());
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos || digits.size() > 6)
      throw FormatError("control code field '" + tok + "' is not a number");
    return std::stoi(digits);
  };
  LabeledCode out{QuadrantLabel::parse(q), {field(s, "S"), field(b, "B"), field(e, "E"), field(d, "D")}};
  return out;
}

struct DatasetRecord {
  std::string control_code;
  std::string abc;
  QuadrantLabel label;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

inline DatasetRecord make_record(const Score& score, const QuadrantLabel& label) {
  return {format_control_code(label, control_code(score)), serialize_abc(score), label};
}

inline nlohmann::json to_json(const DatasetRecord& r) {
  return nlohmann::json{{"control_code", r.control_code}, {"abc", r.abc}, {"label", r.label.name()}};
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("dataset record is not a JSON object");
  for (const char* key : {"control_code", "abc", "label"})
    if (!j.contains(key) || !j[key].is_string()) throw FormatError(std::string("dataset record lacks string field '") + key + "'");
  return {j["control_code"].get<std::string>(), j["abc"].get<std::string>(),
          QuadrantLabel::parse(j["label"].get<std::string>())};
}

inline std::string write_jsonl(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

inline std::vector<DatasetRecord> read_jsonl(const std::string& text) {
  std::vector<DatasetRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(number) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

inline std::array<std::size_t, 4> quadrant_counts(const std::vector<DatasetRecord>& records) {
  std::array<std::size_t, 4> counts{};
  for (const auto& r : records) ++counts[static_cast<std::size_t>(r.label.quadrant - 1)];
  return counts;
}

/// Every record of the tune in each of the fifteen key signatures of its mode.
/// Keys that would push a pitch outside 0-127 are skipped and reported.
inline std::vector<DatasetRecord> fan_out(const DatasetRecord& record, std::vector<std::string>* warnings = nullptr) {
  const Score score = parse_abc(record.abc);
  std::vector<DatasetRecord> out;
  for (const auto& target : fifteen_key_targets(score.key)) {
    try {
      out.push_back(make_record(transpose(score, target.semitones, target.key), record.label));
    } catch (const RangeError& e) {
      if (warnings) warnings->push_back("skipped key " + target.key.to_abc() + " for '" + record.control_code + "': " + e.what());
    }
  }
  return out;
}

/// Replaces every Q2 and Q3 record by its fifteen-key fan-out; Q1 and Q4 pass through.
inline std::vector<DatasetRecord> balance(const std::vector<DatasetRecord>& records,
                                          std::vector<std::string>* warnings = nullptr) {
  std::vector<DatasetRecord> out;
  for (const auto& r : records) {
    if (r.label.quadrant == 2 || r.label.quadrant == 3) {
      auto fanned = fan_out(r, warnings);
      out.insert(out.end(), std::make_move_iterator(fanned.begin()), std::make_move_iterator(fanned.end()));
    } else {
      out.push_back(r);
    }
  }
  return out;
}

struct DatasetSplit {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> test;
};

/// Seeded split at `ratio`:1 within each quadrant; input order is kept inside each part.
inline DatasetSplit split_dataset(const std::vector<DatasetRecord>& records, int ratio, std::uint64_t seed) {
  if (ratio < 1) throw RangeError("split ratio must be at least 1");
  std::vector<bool> is_test(records.size(), false);
  for (int q = 1; q <= 4; ++q) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].label.quadrant == q) members.push_back(i);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(q)));
    shuffle(members, rng);
    const std::size_t n_test = (members.size() + static_cast<std::size_t>(ratio + 1) / 2) / static_cast<std::size_t>(ratio + 1);
    for (std::size_t k = 0; k < n_test; ++k) is_test[members[k]] = true;
  }
  DatasetSplit split;
  for (std::size_t i = 0; i < records.size(); ++i) (is_test[i] ? split.test : split.train).push_back(records[i]);
  return split;
}

}  // namespace emogen
