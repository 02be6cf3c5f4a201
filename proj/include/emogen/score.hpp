/**
 * @file score.hpp
 * @brief Value types shared by every stage: pitches, notes, keys, meters and scores.
 */
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "emogen/errors.hpp"

namespace emogen {

/// Exact duration arithmetic. One quarter note is 1.
using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

/// MIDI note number, middle C = 60.
class Pitch {
 public:
  explicit Pitch(int midi) : midi_(midi) {
    if (midi < 0 || midi > 127) throw RangeError("pitch " + std::to_string(midi) + " outside MIDI range 0-127");
  }
  int midi() const noexcept { return midi_; }
  int pitch_class() const noexcept { return midi_ % 12; }
  friend bool operator==(const Pitch&, const Pitch&) = default;
  friend auto operator<=>(const Pitch&, const Pitch&) = default;

 private:
  int midi_;
};

struct Note {
  std::optional<Pitch> pitch;  // empty for rests
  Rational duration{1};
  bool tie_to_next = false;

  static Note sounded(int midi, Rational duration, bool tie = false) { return Note{Pitch{midi}, duration, tie}; }
  static Note rest(Rational duration) { return Note{std::nullopt, duration, false}; }

  bool is_rest() const noexcept { return !pitch.has_value(); }
  friend bool operator==(const Note&, const Note&) = default;
};

/// One element of the melody sequence M = {(p_i, d_i)}.
struct MelodyNote {
  int pitch;
  Rational duration;
  friend bool operator==(const MelodyNote&, const MelodyNote&) = default;
};
using Melody = std::vector<MelodyNote>;

enum class Mode { major, minor, ionian, dorian, phrygian, lydian, mixolydian, aeolian, locrian };

inline const char* mode_suffix(Mode m) {
  switch (m) {
    case Mode::major: return "";
    case Mode::minor: return "m";
    case Mode::ionian: return "ion";
    case Mode::dorian: return "dor";
    case Mode::phrygian: return "phr";
    case Mode::lydian: return "lyd";
    case Mode::mixolydian: return "mix";
    case Mode::aeolian: return "aeo";
    case Mode::locrian: return "loc";
  }
  return "";
}

/// Distance in fifths from the relative major's tonic up to this mode's tonic.
inline int mode_fifths_offset(Mode m) {
  switch (m) {
    case Mode::major:
    case Mode::ionian: return 0;
    case Mode::dorian: return 2;
    case Mode::phrygian: return 4;
    case Mode::lydian: return -1;
    case Mode::mixolydian: return 1;
    case Mode::minor:
    case Mode::aeolian: return 3;
    case Mode::locrian: return 5;
  }
  return 0;
}

/// Binary mode class used by the feature table: minor third above the tonic -> 0, major third -> 1.
inline int mode_class(Mode m) {
  switch (m) {
    case Mode::major:
    case Mode::ionian:
    case Mode::lydian:
    case Mode::mixolydian: return 1;
    default: return 0;
  }
}

namespace detail {
// Semitone offset of the natural letters C D E F G A B.
inline constexpr std::array<int, 7> kLetterSemitone{0, 2, 4, 5, 7, 9, 11};
inline constexpr std::array<char, 7> kLetters{'C', 'D', 'E', 'F', 'G', 'A', 'B'};
// Position of each letter on the circle of fifths relative to C (F=-1 ... B=5).
inline constexpr std::array<int, 7> kLetterFifths{0, 2, 4, -1, 1, 3, 5};

inline int letter_index(char upper) {
  for (int i = 0; i < 7; ++i)
    if (kLetters[static_cast<std::size_t>(i)] == upper) return i;
  return -1;
}
}  // namespace detail

/// Spelled key signature: tonic letter, tonic accidental (-1 flat, 0, +1 sharp) and mode.
struct KeySignature {
  char tonic_letter = 'C';
  int tonic_accidental = 0;
  Mode mode = Mode::major;

  int tonic_pitch_class() const {
    int pc = detail::kLetterSemitone[static_cast<std::size_t>(detail::letter_index(tonic_letter))] + tonic_accidental;
    return ((pc % 12) + 12) % 12;
  }

  /// Number of sharps (positive) or flats (negative) in the signature.
  int fifths() const {
    int tonic = detail::kLetterFifths[static_cast<std::size_t>(detail::letter_index(tonic_letter))] + 7 * tonic_accidental;
    return tonic - mode_fifths_offset(mode);
  }

  /// Key-signature accidental applied to a natural letter (index into C..B).
  int accidental_for_letter(int letter) const {
    const int f = fifths();
    // Sharps are added in the order F C G D A E B, flats in the reverse order.
    const int pos = detail::kLetterFifths[static_cast<std::size_t>(letter)];  // F=-1 .. B=5
    if (f > 0 && pos + 1 < f) return 1;
    if (f < 0 && 5 - pos < -f) return -1;
    return 0;
  }

  std::string tonic_name() const {
    std::string s(1, tonic_letter);
    if (tonic_accidental > 0) s += '#';
    if (tonic_accidental < 0) s += 'b';
    return s;
  }

  std::string to_abc() const { return tonic_name() + mode_suffix(mode); }

  friend bool operator==(const KeySignature&, const KeySignature&) = default;
};

/// Pitch-class labels of the feature table's key column.
inline constexpr std::array<const char*, 12> kKeyLabels{"C", "C#", "D", "Eb", "E", "F", "F#", "G", "G#/Ab", "A", "Bb", "B"};

struct Meter {
  int numerator = 4;
  int denominator = 4;

  /// Length of a full measure in quarter notes.
  Rational measure_length() const { return Rational(4 * numerator, denominator); }
  friend bool operator==(const Meter&, const Meter&) = default;
};

enum class Barline { none, single, double_bar, final_bar, repeat_end, repeat_start, repeat_both };

inline const char* barline_token(Barline b) {
  switch (b) {
    case Barline::none: return "";
    case Barline::single: return "|";
    case Barline::double_bar: return "||";
    case Barline::final_bar: return "|]";
    case Barline::repeat_end: return ":|";
    case Barline::repeat_start: return "|:";
    case Barline::repeat_both: return ":|:";
  }
  return "";
}

/// Barlines that close a section.
inline bool is_section_barline(Barline b) {
  return b == Barline::double_bar || b == Barline::final_bar || b == Barline::repeat_end ||
         b == Barline::repeat_start || b == Barline::repeat_both;
}

struct Measure {
  std::vector<Note> notes;
  Barline barline = Barline::single;  // closing barline

  Rational duration() const {
    Rational total{0};
    for (const auto& n : notes) total += n.duration;
    return total;
  }
  friend bool operator==(const Measure&, const Measure&) = default;
};

struct Score {
  int reference = 1;
  std::optional<std::string> title;
  KeySignature key;
  Meter meter;
  Rational unit_note_length{1, 8};  // in whole notes, as written in L:
  std::optional<double> tempo_bpm;   // quarter notes per minute
  bool opening_repeat = false;
  std::vector<Measure> measures;

  bool final_marker() const { return !measures.empty() && measures.back().barline == Barline::final_bar; }

  void set_final_marker(bool on) {
    if (measures.empty()) return;
    auto& last = measures.back().barline;
    if (on) last = Barline::final_bar;
    else if (last == Barline::final_bar) last = Barline::single;
  }

  /// Indices of measures whose closing barline ends a section; the last measure always ends one.
  std::vector<std::size_t> section_boundaries() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < measures.size(); ++i)
      if (i + 1 == measures.size() || is_section_barline(measures[i].barline)) out.push_back(i);
    return out;
  }

  Rational total_duration() const {
    Rational total{0};
    for (const auto& m : measures) total += m.duration();
    return total;
  }

  friend bool operator==(const Score&, const Score&) = default;
};

}  // namespace emogen
