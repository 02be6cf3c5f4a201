/**
 * @file abc.hpp
 * @brief Strict reader and canonical writer for a monophonic subset of ABC notation.
 *
 * Accepted header fields: X, T, L, M, Q, K plus the purely informational ones
 * (A B C D F G H I N O R S Z r W), which are skipped. The body may contain note
 * letters with octave marks and accidentals, length multipliers/divisors, rests,
 * ties, broken rhythm and the barlines | || |] :| |: :|: (also written ::).
 * A line break that falls where a measure is exactly full acts as a barline.
 * Everything else (chords, tuplets, grace notes, decorations, annotations,
 * inline fields, voices, lyrics, voltas) is rejected with SyntaxError.
 */
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emogen/score.hpp"

namespace emogen {

namespace abc_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_field_line(std::string_view line) {
  return line.size() >= 2 && std::isalpha(static_cast<unsigned char>(line[0])) && line[1] == ':';
}

// Header letters that carry no musical content for a monophonic melody.
inline bool is_informational_field(char c) {
  static constexpr std::string_view kInfo = "ABCDFGHINORSZrW";
  return kInfo.find(c) != std::string_view::npos;
}

struct SourceLine {
  std::size_t number;  // 1-based
  std::string text;
};

inline std::vector<SourceLine> split_lines(std::string_view text) {
  std::vector<SourceLine> lines;
  std::size_t number = 1;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back({number++, std::move(line)});
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

// Strips a trailing % comment. Returns true when the whole line is a comment or directive.
inline bool strip_comment(std::string& line) {
  const auto pos = line.find('%');
  if (pos == std::string::npos) return false;
  const bool whole = trim(std::string_view(line).substr(0, pos)).empty();
  line.erase(pos);
  return whole;
}

inline long parse_positive_int(std::string_view s, std::size_t line, std::size_t col, const char* what) {
  s = trim(s);
  if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw SyntaxError(std::string("malformed ") + what + " '" + std::string(s) + "'", line, col);
  const long v = std::stol(std::string(s));
  if (v <= 0) throw SyntaxError(std::string(what) + " must be positive", line, col);
  return v;
}

inline Rational parse_fraction(std::string_view s, std::size_t line, std::size_t col, const char* what) {
  s = trim(s);
  const auto slash = s.find('/');
  if (slash == std::string_view::npos) return Rational(parse_positive_int(s, line, col, what));
  return Rational(parse_positive_int(s.substr(0, slash), line, col, what),
                  parse_positive_int(s.substr(slash + 1), line, col, what));
}

inline Meter parse_meter(std::string_view v, std::size_t line, std::size_t col) {
  v = trim(v);
  if (v == "C") return Meter{4, 4};
  if (v == "C|") return Meter{2, 2};
  const auto slash = v.find('/');
  if (slash == std::string_view::npos) throw SyntaxError("unsupported meter '" + std::string(v) + "'", line, col);
  return Meter{static_cast<int>(parse_positive_int(v.substr(0, slash), line, col, "meter")),
               static_cast<int>(parse_positive_int(v.substr(slash + 1), line, col, "meter"))};
}

inline double parse_tempo(std::string_view v, std::size_t line, std::size_t col) {
  v = trim(v);
  Rational beat(1, 4);
  std::string_view bpm_text = v;
  if (const auto eq = v.find('='); eq != std::string_view::npos) {
    beat = parse_fraction(v.substr(0, eq), line, col, "tempo beat");
    bpm_text = trim(v.substr(eq + 1));
  }
  std::string s(bpm_text);
  char* end = nullptr;
  const double bpm = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !(bpm > 0) || !std::isfinite(bpm))
    throw SyntaxError("malformed tempo '" + std::string(v) + "'", line, col);
  // Normalise to quarter notes per minute.
  return bpm * to_double(beat) * 4.0;
}

inline KeySignature parse_key(std::string_view v, std::size_t line, std::size_t col) {
  v = trim(v);
  if (v.empty()) throw SyntaxError("empty key field", line, col);
  KeySignature key;
  const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(v[0])));
  if (detail::letter_index(letter) < 0 || v[0] != letter)
    throw SyntaxError("unsupported key '" + std::string(v) + "'", line, col);
  key.tonic_letter = letter;
  std::size_t i = 1;
  if (i < v.size() && (v[i] == '#' || v[i] == 'b')) {
    key.tonic_accidental = v[i] == '#' ? 1 : -1;
    ++i;
  }
  const std::string mode = lower(trim(v.substr(i)));
  static const std::vector<std::pair<std::string, Mode>> kModes{
      {"maj", Mode::major}, {"min", Mode::minor}, {"ion", Mode::ionian},     {"dor", Mode::dorian},
      {"phr", Mode::phrygian}, {"lyd", Mode::lydian}, {"mix", Mode::mixolydian}, {"aeo", Mode::aeolian},
      {"loc", Mode::locrian}};
  if (mode.empty()) {
    key.mode = Mode::major;
  } else if (mode == "m") {
    key.mode = Mode::minor;
  } else {
    bool found = false;
    for (const auto& [prefix, m] : kModes) {
      // Full mode words ("minor", "dorian") are accepted; anything after the word is not.
      if (mode.size() >= 3 && mode.compare(0, 3, prefix) == 0 &&
          std::all_of(mode.begin(), mode.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); })) {
        key.mode = m;
        found = true;
        break;
      }
    }
    if (!found) throw SyntaxError("unsupported key '" + std::string(v) + "'", line, col);
  }
  if (key.fifths() < -7 || key.fifths() > 7)
    throw SemanticError("key signature '" + std::string(v) + "' has more than seven accidentals", line, col);
  return key;
}

class BodyParser {
 public:
  BodyParser(Score& score, std::size_t default_line) : score_(score), last_line_(default_line) {}

  void feed(const SourceLine& line) {
    const std::string& s = line.text;
    std::size_t i = 0;
    auto col = [&](std::size_t at) { return at + 1; };
    auto syntax = [&](const std::string& what, std::size_t at) { return SyntaxError(what, line.number, col(at)); };
    last_line_ = line.number;
    last_col_ = s.size() + 1;

    while (i < s.size()) {
      const char c = s[i];
      if (c == ' ' || c == '\t' || c == '`' || c == '\\') {
        ++i;
        continue;
      }
      if (c == '|' || c == ':') {
        i = read_barline(s, i, line.number);
        continue;
      }
      if (c == '>' || c == '<') {
        if (current_.empty() || broken_pending_ != Rational(0))
          throw syntax("broken rhythm without a preceding note", i);
        std::size_t run = 0;
        while (i + run < s.size() && s[i + run] == c) ++run;
        if (run > 3) throw syntax("broken rhythm longer than three marks", i);
        const Rational shrink(1, 1L << run);
        const Rational grow = Rational(2) - shrink;
        current_.back().duration *= (c == '>') ? grow : shrink;
        broken_pending_ = (c == '>') ? shrink : grow;
        i += run;
        continue;
      }
      if (c == '^' || c == '_' || c == '=' || is_note_letter(c) || c == 'z' || c == 'x') {
        i = read_note(s, i, line.number);
        continue;
      }
      if (c == '-') throw syntax("tie without a preceding note", i);
      if (c == '(' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))
        throw syntax("tuplets are not supported", i);
      switch (c) {
        case '[': throw syntax("chords, inline fields and voltas are not supported", i);
        case '{': throw syntax("grace notes are not supported", i);
        case '"': throw syntax("annotations and chord symbols are not supported", i);
        case '!':
        case '+': throw syntax("decorations are not supported", i);
        default: throw syntax(std::string("unexpected character '") + c + "'", i);
      }
    }
    // Folk-song transcriptions often drop the barline at a phrase-ending line break.
    // A measure that is exactly full at the end of a line is closed there.
    if (!current_.empty() && broken_pending_ == Rational(0) && measure_duration() == score_.meter.measure_length())
      close_measure(Barline::single, line.number, s.size() + 1);
  }

  // With open_end the text is a prefix of a tune still being written: a pending
  // broken rhythm or an empty body is not an error yet.
  void finish(bool open_end) {
    if (broken_pending_ != Rational(0)) {
      if (open_end) return;
      throw SyntaxError("broken rhythm at end of tune", last_line_, last_col_);
    }
    if (!current_.empty()) close_measure(Barline::none, last_line_, last_col_);
    if (score_.measures.empty() && !open_end) throw SemanticError("tune has no measures", last_line_, last_col_);
  }

 private:
  Rational measure_duration() const {
    Rational total{0};
    for (const auto& n : current_) total += n.duration;
    return total;
  }

  static bool is_note_letter(char c) { return (c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g'); }

  std::size_t read_barline(const std::string& s, std::size_t i, std::size_t line) {
    auto starts = [&](std::string_view tok) { return s.compare(i, tok.size(), tok) == 0; };
    Barline kind;
    std::size_t len;
    if (starts(":|:")) kind = Barline::repeat_both, len = 3;
    else if (starts("::")) kind = Barline::repeat_both, len = 2;
    else if (starts(":|")) kind = Barline::repeat_end, len = 2;
    else if (starts("|]")) kind = Barline::final_bar, len = 2;
    else if (starts("||")) kind = Barline::double_bar, len = 2;
    else if (starts("|:")) kind = Barline::repeat_start, len = 2;
    else if (starts("|")) kind = Barline::single, len = 1;
    else throw SyntaxError("stray ':'", line, i + 1);
    if (i + len < s.size() && (std::isdigit(static_cast<unsigned char>(s[i + len])) || s[i + len] == '['))
      throw SyntaxError("voltas are not supported", line, i + len + 1);
    if (i + len < s.size() && (s[i + len] == '|' || s[i + len] == ']' || s[i + len] == ':'))
      throw SyntaxError("unsupported barline", line, i + 1);

    if (current_.empty()) {
      // Only single barlines and one opening repeat may precede the first note.
      if (!score_.measures.empty() || score_.opening_repeat) throw SyntaxError("empty measure", line, i + 1);
      if (kind == Barline::repeat_start) score_.opening_repeat = true;
      else if (kind != Barline::single) throw SyntaxError("empty measure", line, i + 1);
      return i + len;
    }
    if (broken_pending_ != Rational(0)) throw SyntaxError("broken rhythm across a barline", line, i + 1);
    close_measure(kind, line, i + 1);
    return i + len;
  }

  void close_measure(Barline kind, std::size_t line, std::size_t col) {
    Measure m{std::move(current_), kind};
    current_.clear();
    if (m.duration() > score_.meter.measure_length())
      throw SemanticError("measure " + std::to_string(score_.measures.size() + 1) + " is longer than the meter", line, col);
    score_.measures.push_back(std::move(m));
    accidentals_.clear();
  }

  std::size_t read_note(const std::string& s, std::size_t i, std::size_t line) {
    const std::size_t start = i;
    int explicit_acc = 0;
    bool has_acc = false;
    if (s[i] == '^' || s[i] == '_' || s[i] == '=') {
      has_acc = true;
      const char a = s[i];
      if (a == '=') {
        ++i;
      } else {
        explicit_acc = a == '^' ? 1 : -1;
        ++i;
        if (i < s.size() && s[i] == a) {
          explicit_acc *= 2;
          ++i;
        }
      }
      if (i >= s.size() || !is_note_letter(s[i])) throw SyntaxError("accidental without a note", line, start + 1);
    }

    Note note;
    const char c = s[i++];
    if (c == 'z' || c == 'x') {
      note.pitch.reset();
    } else {
      const bool lower_case = c >= 'a';
      const int letter = detail::letter_index(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      int octave = lower_case ? 5 : 4;
      while (i < s.size() && (s[i] == '\'' || s[i] == ',')) {
        octave += s[i] == '\'' ? 1 : -1;
        ++i;
      }
      const auto slot = std::make_pair(letter, octave);
      int acc;
      if (has_acc) {
        acc = explicit_acc;
        accidentals_[slot] = acc;
      } else if (auto it = accidentals_.find(slot); it != accidentals_.end()) {
        acc = it->second;
      } else {
        acc = score_.key.accidental_for_letter(letter);
      }
      const int midi = 12 * (octave + 1) + detail::kLetterSemitone[static_cast<std::size_t>(letter)] + acc;
      if (midi < 0 || midi > 127)
        throw SemanticError("pitch " + std::to_string(midi) + " outside MIDI range", line, start + 1);
      note.pitch = Pitch{midi};
    }

    // Length multiplier: [digits] ['/' [digits] | '/'...]
    long num = 1;
    long den = 1;
    std::size_t digits_start = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > digits_start) {
      if (i - digits_start > 6) throw SyntaxError("note length too long", line, digits_start + 1);
      num = std::stol(s.substr(digits_start, i - digits_start));
    }
    if (i < s.size() && s[i] == '/') {
      ++i;
      const std::size_t den_start = i;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      if (i > den_start) {
        if (i - den_start > 6) throw SyntaxError("note length too long", line, den_start + 1);
        den = std::stol(s.substr(den_start, i - den_start));
      } else {
        den = 2;
        while (i < s.size() && s[i] == '/') {
          den *= 2;
          ++i;
          if (den > 1024) throw SyntaxError("note length too short", line, i);
        }
      }
    }
    if (num <= 0 || den <= 0) throw SyntaxError("zero note length", line, start + 1);
    if (den > 1024 || (den & (den - 1)) != 0)
      throw SyntaxError("note length divisor must be a power of two up to 1024", line, start + 1);
    note.duration = score_.unit_note_length * 4 * Rational(num, den);
    if (broken_pending_ != Rational(0)) {
      note.duration *= broken_pending_;
      broken_pending_ = Rational(0);
    }

    if (i < s.size() && s[i] == '-') {
      if (note.is_rest()) throw SyntaxError("tie on a rest", line, i + 1);
      note.tie_to_next = true;
      ++i;
    }
    current_.push_back(note);
    return i;
  }

  Score& score_;
  std::vector<Note> current_;
  std::map<std::pair<int, int>, int> accidentals_;
  Rational broken_pending_{0};
  std::size_t last_line_;
  std::size_t last_col_ = 1;
};

inline std::string format_fraction(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline std::string format_length(const Rational& mult) {
  const auto n = mult.numerator();
  const auto d = mult.denominator();
  if (n == 1 && d == 1) return "";
  if (d == 1) return std::to_string(n);
  if (n == 1 && d == 2) return "/";
  if (n == 1) return "/" + std::to_string(d);
  return std::to_string(n) + "/" + std::to_string(d);
}

inline std::string format_tempo(double bpm) {
  char buf[64];
  if (bpm == std::floor(bpm) && bpm < 1e9) std::snprintf(buf, sizeof buf, "%.0f", bpm);
  else std::snprintf(buf, sizeof buf, "%.17g", bpm);
  return buf;
}

// Spells one pitch given the key and the accidentals already written in this measure.
class PitchSpeller {
 public:
  explicit PitchSpeller(const KeySignature& key) : key_(key) {}

  void new_measure() { written_.clear(); }

  std::string spell(int midi) {
    // A letter whose current accidental already produces the pitch needs no mark.
    for (int letter = 0; letter < 7; ++letter) {
      for (int octave = midi / 12 - 2; octave <= midi / 12; ++octave) {
        const int natural = 12 * (octave + 1) + detail::kLetterSemitone[static_cast<std::size_t>(letter)];
        if (natural + active(letter, octave) == midi) return letters(letter, octave);
      }
    }
    static constexpr std::array<std::pair<int, int>, 12> kSharp{{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {3, 0},
                                                                 {3, 1}, {4, 0}, {4, 1}, {5, 0}, {5, 1}, {6, 0}}};
    static constexpr std::array<std::pair<int, int>, 12> kFlat{{{0, 0}, {1, -1}, {1, 0}, {2, -1}, {2, 0}, {3, 0},
                                                                {4, -1}, {4, 0}, {5, -1}, {5, 0}, {6, -1}, {6, 0}}};
    const auto& table = key_.fifths() < 0 ? kFlat : kSharp;
    const auto [letter, acc] = table[static_cast<std::size_t>(midi % 12)];
    const int octave = (midi - acc) / 12 - 1;
    written_[{letter, octave}] = acc;
    const char* mark = acc > 0 ? "^" : acc < 0 ? "_" : "=";
    return mark + letters(letter, octave);
  }

 private:
  int active(int letter, int octave) const {
    if (auto it = written_.find({letter, octave}); it != written_.end()) return it->second;
    return key_.accidental_for_letter(letter);
  }

  static std::string letters(int letter, int octave) {
    std::string out;
    char c = detail::kLetters[static_cast<std::size_t>(letter)];
    if (octave >= 5) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      out.append(static_cast<std::size_t>(octave - 5), '\'');
    } else {
      out += c;
      out.append(static_cast<std::size_t>(4 - octave), ',');
    }
    return out;
  }

  const KeySignature& key_;
  std::map<std::pair<int, int>, int> written_;
};

}  // namespace abc_detail

namespace abc_detail {

inline Score parse_impl(std::string_view text, bool open_end) {
  Score score;
  bool have_key = false;
  bool have_meter = false;
  bool have_unit = false;
  bool have_title = false;
  auto lines = split_lines(text);
  // In prefix mode the last line may still be growing and is not validated as a header.
  const bool last_line_open = open_end && !text.empty() && text.back() != '\n';
  std::size_t idx = 0;

  for (; idx < lines.size() && !have_key; ++idx) {
    auto& line = lines[idx];
    if (strip_comment(line.text)) continue;
    const std::string_view t = trim(line.text);
    if (t.empty()) continue;
    const bool open_line = last_line_open && idx + 1 == lines.size();
    if (open_line) {
      const char c = line.text[0];
      if (!std::isalpha(static_cast<unsigned char>(c)) || (line.text.size() >= 2 && line.text[1] != ':'))
        throw SemanticError("missing K: field before tune body", line.number, 1);
      if (std::string_view("XTLMQK").find(c) == std::string_view::npos && !is_informational_field(c))
        throw SyntaxError(std::string("unsupported header field '") + c + ":'", line.number, 1);
      return score;
    }
    if (!is_field_line(line.text)) {
      throw SemanticError("missing K: field before tune body", line.number, 1);
    }
    const char field = line.text[0];
    const std::string_view value = std::string_view(line.text).substr(2);
    switch (field) {
      case 'X': score.reference = static_cast<int>(parse_positive_int(value, line.number, 3, "reference number")); break;
      case 'T':
        if (!have_title) score.title = std::string(trim(value));
        have_title = true;
        break;
      case 'L': {
        const Rational unit = parse_fraction(value, line.number, 3, "unit note length");
        score.unit_note_length = unit;
        have_unit = true;
        break;
      }
      case 'M':
        score.meter = parse_meter(value, line.number, 3);
        have_meter = true;
        break;
      case 'Q': score.tempo_bpm = parse_tempo(value, line.number, 3); break;
      case 'K':
        score.key = parse_key(value, line.number, 3);
        have_key = true;
        break;
      default:
        if (!is_informational_field(field))
          throw SyntaxError(std::string("unsupported header field '") + field + ":'", line.number, 1);
    }
  }
  if (!have_key) {
    if (open_end) return score;
    throw SemanticError("missing K: field", lines.empty() ? 1 : lines.back().number, 1);
  }
  if (!have_meter) throw SemanticError("missing M: field", 1, 1);
  if (!have_unit) {
    const Rational meter_value(score.meter.numerator, score.meter.denominator);
    score.unit_note_length = meter_value < Rational(3, 4) ? Rational(1, 16) : Rational(1, 8);
  }

  BodyParser body(score, lines.empty() ? 1 : lines.back().number);
  for (; idx < lines.size(); ++idx) {
    auto& line = lines[idx];
    if (strip_comment(line.text)) continue;
    if (trim(line.text).empty()) continue;
    if (is_field_line(line.text)) {
      if (is_informational_field(line.text[0])) continue;
      throw SyntaxError(std::string("field '") + line.text[0] + ":' inside the tune body is not supported", line.number, 1);
    }
    body.feed(line);
  }
  body.finish(open_end);
  return score;
}

}  // namespace abc_detail

/// Parses one ABC tune. Errors carry the line and column of the offending token.
inline Score parse_abc(std::string_view text) { return abc_detail::parse_impl(text, false); }

namespace abc_detail {

/// If the text ends inside a note whose length could still grow digits or a
/// divisor, rewrites that length to the shortest value it can still reach.
inline void shorten_open_note(std::string& text, std::size_t body_start) {
  std::size_t j = text.size();
  while (j > body_start && (std::isdigit(static_cast<unsigned char>(text[j - 1])) || text[j - 1] == '/')) --j;
  const std::size_t length_start = j;
  while (j > body_start && (text[j - 1] == '\'' || text[j - 1] == ',')) --j;
  if (j == body_start) return;
  const char letter = text[j - 1];
  const bool note = (letter >= 'A' && letter <= 'G') || (letter >= 'a' && letter <= 'g') || letter == 'z' || letter == 'x';
  if (!note) return;
  const std::string length = text.substr(length_start);
  const std::size_t slash = length.find('/');
  if (slash == std::string::npos) {
    text += "/1024";
    return;
  }
  const std::string after = length.substr(slash + 1);
  if (after.find_first_not_of('/') == std::string::npos) {
    // "/", "//", ... can still grow into any divisor up to 1024.
    text.resize(length_start + slash);
    text += "/1024";
    return;
  }
  // A partial divisor can still become the largest power of two it is a prefix of.
  for (int p = 1024; p >= 1; p /= 2) {
    const std::string digits = std::to_string(p);
    if (digits.size() > after.size() && digits.compare(0, after.size(), after) == 0) {
      text += digits.substr(after.size());
      return;
    }
  }
}

}  // namespace abc_detail

/// True when `text` could still be extended into a tune that parse_abc accepts.
/// Conservative: a trailing accidental, colon or broken-rhythm mark is treated as
/// an unfinished token; everything before it must already be valid.
inline bool abc_prefix_viable(std::string_view text) {
  std::string_view head = text;
  const auto body_start = [&]() -> std::size_t {
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) return std::string_view::npos;
      if (text.compare(pos, 2, "K:") == 0) return eol + 1;
      pos = eol + 1;
    }
    return std::string_view::npos;
  }();
  if (body_start != std::string_view::npos) {
    std::size_t strip = 0;
    while (strip < 2 && head.size() > body_start + strip) {
      const char c = head[head.size() - 1 - strip];
      if (c == '^' || c == '_' || (c == '=' && strip == 0) || (c == ':' && strip == 0)) ++strip;
      else break;
    }
    // "^_" and "=^" are not prefixes of any accidental.
    if (strip == 2 && head[head.size() - 1] != head[head.size() - 2]) return false;
    head.remove_suffix(strip);
  }
  std::string candidate(head);
  if (body_start != std::string_view::npos) {
    if (head.size() == text.size()) abc_detail::shorten_open_note(candidate, body_start);
    else if (text.back() == ':') candidate += head.back() == '|' ? ":z/1024" : ":|";
    else candidate += "z/1024";  // an accidental needs room for at least the shortest note
  }
  try {
    abc_detail::parse_impl(candidate, true);
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Body text for measures [begin, end); accidentals restart in every measure.
inline std::string serialize_measures(const Score& score, std::size_t begin, std::size_t end,
                                      bool with_barlines = true) {
  using namespace abc_detail;
  std::string out;
  PitchSpeller speller(score.key);
  const Rational unit_quarters = score.unit_note_length * 4;
  for (std::size_t i = begin; i < end && i < score.measures.size(); ++i) {
    speller.new_measure();
    for (const auto& n : score.measures[i].notes) {
      out += n.is_rest() ? std::string("z") : speller.spell(n.pitch->midi());
      out += format_length(n.duration / unit_quarters);
      if (n.tie_to_next) out += '-';
    }
    if (with_barlines) out += barline_token(score.measures[i].barline);
  }
  return out;
}

/// Canonical text: headers in X/T/L/M/Q/K order, compact body on one line, one barline per measure.
inline std::string serialize_abc(const Score& score) {
  using namespace abc_detail;
  std::string out;
  out += "X:" + std::to_string(score.reference) + "\n";
  if (score.title) out += "T:" + *score.title + "\n";
  out += "L:" + format_fraction(score.unit_note_length) + "\n";
  out += "M:" + std::to_string(score.meter.numerator) + "/" + std::to_string(score.meter.denominator) + "\n";
  if (score.tempo_bpm) out += "Q:1/4=" + format_tempo(*score.tempo_bpm) + "\n";
  out += "K:" + score.key.to_abc() + "\n";
  std::string body = serialize_measures(score, 0, score.measures.size());
  if (score.opening_repeat) body.insert(0, "|:");
  // A body such as "A:|..." would read back as a header line.
  else if (body.size() >= 2 && body[1] == ':') body.insert(0, "|");
  return out + body;
}

/// One tune's text and the line where it starts in the enclosing file.
struct TuneText {
  std::string text;
  std::size_t first_line = 1;
};

/// Splits a multi-tune file into tunes separated by blank lines. Blocks without
/// an X: or K: field (file headers, free text) are skipped.
inline std::vector<TuneText> split_tunes(std::string_view file_text) {
  using namespace abc_detail;
  std::vector<TuneText> tunes;
  TuneText current;
  bool has_field = false;
  auto flush = [&] {
    if (has_field && !trim(current.text).empty()) tunes.push_back(current);
    current = TuneText{};
    has_field = false;
  };
  for (const auto& line : split_lines(file_text)) {
    if (trim(line.text).empty()) {
      flush();
      continue;
    }
    if (current.text.empty()) current.first_line = line.number;
    if (line.text.rfind("X:", 0) == 0 || line.text.rfind("K:", 0) == 0) has_field = true;
    current.text += line.text;
    current.text += '\n';
  }
  flush();
  return tunes;
}

}  // namespace emogen
