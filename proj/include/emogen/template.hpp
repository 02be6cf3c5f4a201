/**
 * @file template.hpp
 * @brief Per-quadrant tempo, octave and volume treatment of generated melodies,
 *        with switches that turn each controlled feature off.
 */
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "emogen/lm.hpp"
#include "emogen/render.hpp"
#include "emogen/transform.hpp"

namespace emogen {

struct TemplateSpec {
  int tempo_low;
  int tempo_high;
  int octave_shift;
  double volume_db;
};

/// Indexed by quadrant - 1.
inline constexpr std::array<TemplateSpec, 4> kTemplates{{
    {160, 184, 0, 5.0},
    {184, 228, -2, 10.0},
    {40, 69, -1, 0.0},
    {40, 69, 0, 0.0},
}};

inline const TemplateSpec& template_for(const QuadrantLabel& label) {
  return kTemplates[static_cast<std::size_t>(label.quadrant - 1)];
}

struct AblationMask {
  bool tempo = true;
  bool pitch_sd = true;
  bool mode = true;
  bool octave = true;
  bool volume = true;

  static AblationMask full() { return {}; }

  /// Full control minus the comma-separated features in `list` (tempo, pitch_sd, mode, octave, volume).
  static AblationMask without(std::string_view list) {
    AblationMask m;
    while (!list.empty()) {
      const std::size_t comma = list.find(',');
      const std::string_view name = list.substr(0, comma);
      if (name == "tempo") m.tempo = false;
      else if (name == "pitch_sd" || name == "pitchsd") m.pitch_sd = false;
      else if (name == "mode") m.mode = false;
      else if (name == "octave") m.octave = false;
      else if (name == "volume") m.volume = false;
      else if (!name.empty()) throw FormatError("unknown ablation feature '" + std::string(name) + "'");
      if (comma == std::string_view::npos) break;
      list.remove_prefix(comma + 1);
    }
    return m;
  }

  friend bool operator==(const AblationMask&, const AblationMask&) = default;
};

/// round(base * 10^(dB/20)) clamped to the MIDI velocity range.
inline int velocity_for_gain(double db, int base = kBaseVelocity) {
  const long v = std::lround(base * std::pow(10.0, db / 20.0));
  return static_cast<int>(std::clamp<long>(v, 1, 127));
}

struct TemplateResult {
  PerformanceScore performance;
  Score original;  // the score before the template
  int requested_octaves = 0;
  int applied_octaves = 0;
};

/// Applies tempo, octave and volume for the quadrant. Each feature draws from its own
/// seeded stream, so switching one off leaves the others unchanged.
inline TemplateResult apply_template(const Score& score, const QuadrantLabel& label, const AblationMask& mask,
                                     std::uint64_t seed) {
  const TemplateSpec& spec = template_for(label);
  TemplateResult out;
  out.original = score;
  Score shaped = score;
  if (mask.octave) {
    out.requested_octaves = spec.octave_shift;
    const OctaveShiftResult shifted = shift_octaves(score, spec.octave_shift);
    shaped = shifted.score;
    out.applied_octaves = shifted.applied_octaves;
  }
  double tempo = score.tempo_bpm.value_or(kDefaultTempo);
  if (mask.tempo) {
    Rng rng(derive_seed(seed, "tempo"));
    tempo = uniform_int(rng, spec.tempo_low, spec.tempo_high);
    shaped.tempo_bpm = tempo;
  }
  const int velocity = mask.volume ? velocity_for_gain(spec.volume_db) : kBaseVelocity;
  out.performance = PerformanceScore{std::move(shaped), tempo, velocity};
  return out;
}

inline TemplateResult apply_template(const Score& score, const QuadrantLabel& label, std::uint64_t seed) {
  return apply_template(score, label, AblationMask::full(), seed);
}

/// The label sent to the model: valence follows the mode switch and arousal the
/// pitch_sd switch; a switched-off bit is drawn at random instead.
inline QuadrantLabel conditioning_label(const QuadrantLabel& label, const AblationMask& mask, std::uint64_t seed) {
  bool valence = label.valence_high;
  bool arousal = label.arousal_high;
  if (!mask.mode) {
    Rng rng(derive_seed(seed, "mode"));
    valence = uniform_below(rng, 2) == 1;
  }
  if (!mask.pitch_sd) {
    Rng rng(derive_seed(seed, "pitch_sd"));
    arousal = uniform_below(rng, 2) == 1;
  }
  return QuadrantLabel::from_bits(valence, arousal);
}

inline constexpr int kMaxGenerationAttempts = 16;

struct EmotionPiece {
  QuadrantLabel label;         // the requested emotion
  QuadrantLabel conditioning;  // the label in the prompt
  ControlCode code;
  std::string abc;  // generated text
  int attempts = 0;
  TemplateResult result;
};

/// Generates until a sample parses (at most kMaxGenerationAttempts) and applies the template.
inline EmotionPiece generate_with_emotion(const CharLm& model, const QuadrantLabel& label, const ControlCode& code,
                                          const AblationMask& mask, std::uint64_t seed,
                                          const GenerateOptions& options = {}) {
  EmotionPiece piece;
  piece.label = label;
  piece.conditioning = conditioning_label(label, mask, seed);
  piece.code = code;
  if (model.context_count() > 0 && !model.trained_on(piece.conditioning))
    throw UnseenLabel("model has no training data for " + piece.conditioning.name());
  std::string last_failure;
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    GenerationResult g =
        model.generate(piece.conditioning, code, derive_seed(derive_seed(seed, "generate"), static_cast<std::uint64_t>(attempt)), options);
    if (!g.ok()) {
      last_failure = g.failure;
      continue;
    }
    piece.attempts = attempt + 1;
    piece.abc = std::move(g.text);
    piece.result = apply_template(*g.score, label, mask, seed);
    return piece;
  }
  throw ExhaustedRetries(std::to_string(kMaxGenerationAttempts) + " consecutive unparseable generations for " +
                         label.name() + "; last error: " + last_failure);
}

}  // namespace emogen
