// Shared builders for the test suites.
#pragma once

#include <string>
#include <vector>

#include "emogen/abc.hpp"
#include "emogen/labeling.hpp"
#include "emogen/rng.hpp"
#include "emogen/transform.hpp"

namespace emogen::testing {

inline Score make_score(const std::vector<std::vector<Note>>& measures, Meter meter = {4, 4},
                        KeySignature key = {'C', 0, Mode::major}) {
  Score s;
  s.key = key;
  s.meter = meter;
  for (const auto& notes : measures) s.measures.push_back({notes, Barline::single});
  if (!s.measures.empty()) s.measures.back().barline = Barline::final_bar;
  return s;
}

/// Quarter-note melody in 4/4, four notes per bar.
inline Score quarters(const std::vector<int>& pitches, KeySignature key = {'C', 0, Mode::major}) {
  std::vector<std::vector<Note>> bars;
  for (std::size_t i = 0; i < pitches.size(); i += 4) {
    std::vector<Note> bar;
    for (std::size_t j = i; j < i + 4 && j < pitches.size(); ++j) bar.push_back(Note::sounded(pitches[j], Rational(1)));
    bars.push_back(bar);
  }
  return make_score(bars, {4, 4}, key);
}

/// A random well-formed score: full measures, mixed barlines, rests, ties and accidentals.
inline Score random_score(Rng& rng, std::size_t measures, int low = 48, int high = 84) {
  static const Meter kMeters[] = {{2, 4}, {3, 4}, {4, 4}, {6, 8}, {3, 8}, {2, 2}};
  static const Mode kModes[] = {Mode::major, Mode::minor, Mode::dorian, Mode::mixolydian, Mode::lydian,
                                Mode::phrygian, Mode::locrian, Mode::ionian, Mode::aeolian};
  Score s;
  s.reference = uniform_int(rng, 1, 999);
  s.key = key_with_fifths(uniform_int(rng, -7, 7), kModes[uniform_below(rng, 9)]);
  s.meter = kMeters[uniform_below(rng, 6)];
  s.unit_note_length = uniform_below(rng, 2) ? Rational(1, 8) : Rational(1, 16);
  if (uniform_below(rng, 2)) s.tempo_bpm = uniform_int(rng, 40, 228);
  if (uniform_below(rng, 3) == 0) s.title = "Tune " + std::to_string(s.reference);
  s.opening_repeat = uniform_below(rng, 5) == 0;
  const Rational unit = s.unit_note_length * 4;
  const Rational bar = s.meter.measure_length();
  for (std::size_t m = 0; m < measures; ++m) {
    Measure measure;
    Rational left = bar;
    while (left > Rational(0)) {
      static const Rational kMults[] = {Rational(1, 2), Rational(1), Rational(2), Rational(3), Rational(4)};
      Rational d = unit * kMults[uniform_below(rng, 5)];
      if (d > left) d = left;
      if (uniform_below(rng, 8) == 0) {
        measure.notes.push_back(Note::rest(d));
      } else {
        measure.notes.push_back(Note::sounded(uniform_int(rng, low, high), d, uniform_below(rng, 10) == 0));
      }
      left -= d;
    }
    const auto roll = uniform_below(rng, 20);
    measure.barline = roll == 0 ? Barline::double_bar
                      : roll == 1 ? Barline::repeat_end
                      : roll == 2 ? Barline::repeat_start
                      : roll == 3 ? Barline::repeat_both
                                  : Barline::single;
    s.measures.push_back(std::move(measure));
  }
  if (uniform_below(rng, 2)) s.set_final_marker(true);
  return s;
}

inline Melody random_melody(Rng& rng, std::size_t n) {
  Melody m;
  for (std::size_t i = 0; i < n; ++i)
    m.push_back({uniform_int(rng, 21, 108), Rational(uniform_int(rng, 1, 16), 1 << uniform_below(rng, 5))});
  return m;
}

inline DatasetRecord record_for(const Score& s, int quadrant) {
  return make_record(s, QuadrantLabel::from_quadrant(quadrant));
}

}  // namespace emogen::testing
