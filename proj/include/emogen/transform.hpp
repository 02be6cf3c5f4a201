/**
 * @file transform.hpp
 * @brief Structure-preserving score transformations: transposition, octave shifts,
 *        melody extraction and fixed-length segmentation.
 */
#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include "emogen/score.hpp"

namespace emogen {

/// Shifts every sounded pitch by `semitones` and rewrites the key header.
inline Score transpose(const Score& score, int semitones, const KeySignature& target_key) {
  if (std::abs(semitones) > 11) throw RangeError("transposition of " + std::to_string(semitones) + " semitones exceeds an octave");
  Score out = score;
  out.key = target_key;
  for (auto& m : out.measures) {
    for (auto& n : m.notes) {
      if (n.is_rest()) continue;
      const int shifted = n.pitch->midi() + semitones;
      if (shifted < 0 || shifted > 127)
        throw RangeError("transposed pitch " + std::to_string(shifted) + " outside MIDI range");
      n.pitch = Pitch{shifted};
    }
  }
  return out;
}

/// Key signature with `fifths` sharps (positive) or flats (negative), keeping `mode`.
inline KeySignature key_with_fifths(int fifths, Mode mode) {
  const int tonic = fifths + mode_fifths_offset(mode);
  for (int letter = 0; letter < 7; ++letter) {
    const int diff = tonic - detail::kLetterFifths[static_cast<std::size_t>(letter)];
    if (diff % 7 == 0) return KeySignature{detail::kLetters[static_cast<std::size_t>(letter)], diff / 7, mode};
  }
  return KeySignature{};  // unreachable: every residue mod 7 has a letter
}

struct KeyTarget {
  KeySignature key;
  int semitones;
};

/// The fifteen standard signatures (seven flats to seven sharps) in the tune's mode,
/// each paired with the smallest-magnitude shift from the current tonic.
/// A tritone tie goes up for sharp keys and down for flat keys.
inline std::vector<KeyTarget> fifteen_key_targets(const KeySignature& source) {
  std::vector<KeyTarget> out;
  const int from = source.tonic_pitch_class();
  for (int fifths = -7; fifths <= 7; ++fifths) {
    const KeySignature key = key_with_fifths(fifths, source.mode);
    int shift = ((key.tonic_pitch_class() - from) % 12 + 12) % 12;
    if (shift > 6 || (shift == 6 && fifths < 0)) shift -= 12;
    out.push_back({key, shift});
  }
  return out;
}

struct OctaveShiftResult {
  Score score;
  int applied_octaves = 0;
};

/// Shifts by whole octaves. When the requested shift would push a pitch out of
/// 0-127 its magnitude is reduced one octave at a time until everything fits.
inline OctaveShiftResult shift_octaves(const Score& score, int octaves) {
  int lowest = 127;
  int highest = 0;
  bool any = false;
  for (const auto& m : score.measures)
    for (const auto& n : m.notes)
      if (!n.is_rest()) {
        lowest = std::min(lowest, n.pitch->midi());
        highest = std::max(highest, n.pitch->midi());
        any = true;
      }
  int applied = octaves;
  if (any) {
    while (applied != 0 && (lowest + 12 * applied < 0 || highest + 12 * applied > 127)) applied += applied > 0 ? -1 : 1;
  }
  OctaveShiftResult result{score, applied};
  if (applied == 0) return result;
  for (auto& m : result.score.measures)
    for (auto& n : m.notes)
      if (!n.is_rest()) n.pitch = Pitch{n.pitch->midi() + 12 * applied};
  return result;
}

/// Sounded notes in order; rests are dropped.
inline Melody extract_melody(const Score& score) {
  Melody melody;
  for (const auto& m : score.measures)
    for (const auto& n : m.notes)
      if (!n.is_rest()) melody.push_back({n.pitch->midi(), n.duration});
  if (melody.empty()) throw EmptyMelody();
  return melody;
}

inline constexpr std::size_t kSegmentMeasures = 20;
inline constexpr std::size_t kMaxMergedTail = 10;

/// Chunk sizes for a tune of `measures` bars: runs of 20, with a tail of at most
/// 10 bars folded into the previous chunk and a longer tail kept on its own.
inline std::vector<std::size_t> segment_sizes(std::size_t measures) {
  std::vector<std::size_t> sizes(measures / kSegmentMeasures, kSegmentMeasures);
  const std::size_t tail = measures % kSegmentMeasures;
  if (tail == 0) return sizes;
  if (tail <= kMaxMergedTail && !sizes.empty()) sizes.back() += tail;
  else sizes.push_back(tail);
  return sizes;
}

/// Splits a score into chunks (see segment_sizes); each chunk ends with "|]".
inline std::vector<Score> segment(const Score& score) {
  std::vector<Score> chunks;
  std::size_t begin = 0;
  for (std::size_t size : segment_sizes(score.measures.size())) {
    Score chunk = score;
    chunk.measures.assign(score.measures.begin() + static_cast<std::ptrdiff_t>(begin),
                          score.measures.begin() + static_cast<std::ptrdiff_t>(begin + size));
    if (begin > 0) {
      const Barline prev = score.measures[begin - 1].barline;
      chunk.opening_repeat = prev == Barline::repeat_start || prev == Barline::repeat_both;
    }
    chunk.set_final_marker(true);
    chunks.push_back(std::move(chunk));
    begin += size;
  }
  return chunks;
}

}  // namespace emogen
