#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "emogen/features.hpp"
#include "emogen/template.hpp"
#include "support.hpp"

using namespace emogen;
using emogen::testing::quarters;
using emogen::testing::random_score;
using emogen::testing::record_for;

namespace {

const CharLm& memorized_model() {
  static const CharLm model = [] {
    std::vector<DatasetRecord> rs;
    for (int q = 1; q <= 4; ++q)
      rs.push_back(record_for(parse_abc("X:1\nL:1/8\nM:4/4\nK:D\ndefg a2 f2|e2 c2 d4|]\n"), q));
    return CharLm::train(rs, 6, 1e-9);
  }();
  return model;
}

const ControlCode kCode{1, 2, 10, 2};

}  // namespace

TEST(Template, Table) {
  EXPECT_EQ(template_for(QuadrantLabel::from_quadrant(1)).tempo_low, 160);
  EXPECT_EQ(template_for(QuadrantLabel::from_quadrant(2)).tempo_high, 228);
  EXPECT_EQ(template_for(QuadrantLabel::from_quadrant(2)).octave_shift, -2);
  EXPECT_EQ(template_for(QuadrantLabel::from_quadrant(3)).octave_shift, -1);
  EXPECT_EQ(template_for(QuadrantLabel::from_quadrant(4)).volume_db, 0.0);
}

TEST(Template, Velocity) {
  EXPECT_EQ(velocity_for_gain(0.0), 64);
  EXPECT_EQ(velocity_for_gain(5.0), static_cast<int>(std::lround(64 * std::pow(10.0, 0.25))));
  EXPECT_EQ(velocity_for_gain(5.0), 114);
  EXPECT_EQ(velocity_for_gain(10.0), 127);  // 202 clamps
  EXPECT_EQ(velocity_for_gain(-200.0), 1);
}

TEST(Template, TempoAlwaysInRangeAndCoversIt) {
  for (int q = 1; q <= 4; ++q) {
    const auto label = QuadrantLabel::from_quadrant(q);
    const auto& spec = template_for(label);
    std::set<int> seen;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
      const auto r = apply_template(quarters({60, 62}), label, seed);
      const double t = r.performance.tempo_bpm;
      ASSERT_GE(t, spec.tempo_low);
      ASSERT_LE(t, spec.tempo_high);
      EXPECT_EQ(t, std::floor(t));
      EXPECT_EQ(r.performance.score.tempo_bpm, t);
      seen.insert(static_cast<int>(t));
    }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(spec.tempo_high - spec.tempo_low + 1));
  }
}

TEST(Template, OctaveShiftsAndFallback) {
  const Score s = quarters({60, 64, 67, 72});
  const auto q2 = apply_template(s, QuadrantLabel::from_quadrant(2), 1);
  EXPECT_EQ(q2.applied_octaves, -2);
  EXPECT_DOUBLE_EQ(avg_pitch(extract_melody(q2.performance.score)), avg_pitch(extract_melody(s)) - 24.0);
  const auto q3 = apply_template(s, QuadrantLabel::from_quadrant(3), 1);
  EXPECT_EQ(q3.applied_octaves, -1);
  const auto q1 = apply_template(s, QuadrantLabel::from_quadrant(1), 1);
  EXPECT_EQ(q1.applied_octaves, 0);
  EXPECT_EQ(extract_melody(q1.performance.score), extract_melody(s));
  const auto low = apply_template(quarters({15, 30}), QuadrantLabel::from_quadrant(2), 1);
  EXPECT_EQ(low.requested_octaves, -2);
  EXPECT_EQ(low.applied_octaves, -1);
  EXPECT_EQ(low.original, quarters({15, 30}));
}

TEST(Template, LoudnessOrdering) {
  Score s = quarters({60, 64, 67, 72, 67, 64, 60, 55});
  const auto perf = [&](int q) {
    AblationMask m;
    m.tempo = false;
    m.octave = false;
    return apply_template(s, QuadrantLabel::from_quadrant(q), m, 3).performance;
  };
  const double r1 = rms(synthesize(perf(1)));
  const double r2 = rms(synthesize(perf(2)));
  const double r4 = rms(synthesize(perf(4)));
  EXPECT_GT(r2, r1);
  EXPECT_GT(r1, r4);
  EXPECT_NEAR(r1 / r4, 114.0 / 64.0, 1e-9);
}

TEST(Ablation, ParseMask) {
  EXPECT_EQ(AblationMask::without(""), AblationMask::full());
  const auto m = AblationMask::without("tempo,volume");
  EXPECT_FALSE(m.tempo);
  EXPECT_FALSE(m.volume);
  EXPECT_TRUE(m.octave && m.mode && m.pitch_sd);
  EXPECT_THROW(AblationMask::without("tempo,loudness"), FormatError);
}

TEST(Ablation, EachSwitchOnlyChangesItsFeature) {
  Rng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const Score s = random_score(rng, 4, 50, 80);
    const auto label = QuadrantLabel::from_quadrant(1 + trial % 4);
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);
    const auto full = apply_template(s, label, AblationMask::full(), seed);

    auto no_tempo = apply_template(s, label, AblationMask::without("tempo"), seed);
    EXPECT_EQ(no_tempo.performance.tempo_bpm, s.tempo_bpm.value_or(kDefaultTempo));
    EXPECT_EQ(no_tempo.performance.velocity, full.performance.velocity);
    EXPECT_EQ(extract_melody(no_tempo.performance.score), extract_melody(full.performance.score));

    auto no_octave = apply_template(s, label, AblationMask::without("octave"), seed);
    EXPECT_EQ(no_octave.performance.tempo_bpm, full.performance.tempo_bpm);
    EXPECT_EQ(no_octave.performance.velocity, full.performance.velocity);
    EXPECT_EQ(extract_melody(no_octave.performance.score), extract_melody(s));

    auto no_volume = apply_template(s, label, AblationMask::without("volume"), seed);
    EXPECT_EQ(no_volume.performance.velocity, kBaseVelocity);
    EXPECT_EQ(no_volume.performance.score, full.performance.score);
    EXPECT_EQ(no_volume.performance.tempo_bpm, full.performance.tempo_bpm);

    // Mode and pitch_sd only touch the conditioning label.
    for (const char* f : {"mode", "pitch_sd"})
      EXPECT_EQ(apply_template(s, label, AblationMask::without(f), seed).performance, full.performance);
  }
}

TEST(Ablation, ConditioningLabelBits) {
  const auto q2 = QuadrantLabel::from_quadrant(2);
  EXPECT_EQ(conditioning_label(q2, AblationMask::full(), 7), q2);
  int valence_flips = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto c = conditioning_label(q2, AblationMask::without("mode"), seed);
    EXPECT_EQ(c.arousal_high, q2.arousal_high);
    valence_flips += c.valence_high;
    const auto d = conditioning_label(q2, AblationMask::without("pitch_sd"), seed);
    EXPECT_EQ(d.valence_high, q2.valence_high);
    // The mode stream does not depend on whether pitch_sd is also switched off.
    EXPECT_EQ(conditioning_label(q2, AblationMask::without("mode,pitch_sd"), seed).valence_high, c.valence_high);
  }
  EXPECT_GT(valence_flips, 60);
  EXPECT_LT(valence_flips, 140);
}

TEST(Generate, WithEmotionAppliesTemplate) {
  for (int q = 1; q <= 4; ++q) {
    const auto label = QuadrantLabel::from_quadrant(q);
    const auto piece = generate_with_emotion(memorized_model(), label, kCode, AblationMask::full(), 17);
    EXPECT_EQ(piece.attempts, 1);
    EXPECT_EQ(piece.conditioning, label);
    const Score parsed = parse_abc(piece.abc);
    EXPECT_EQ(piece.result.original, parsed);
    const auto& spec = template_for(label);
    EXPECT_GE(piece.result.performance.tempo_bpm, spec.tempo_low);
    EXPECT_LE(piece.result.performance.tempo_bpm, spec.tempo_high);
    EXPECT_EQ(piece.result.applied_octaves, spec.octave_shift);
    // Same seed, same bytes.
    const auto again = generate_with_emotion(memorized_model(), label, kCode, AblationMask::full(), 17);
    EXPECT_EQ(to_midi(again.result.performance), to_midi(piece.result.performance));
  }
}

TEST(Generate, ExhaustedRetries) {
  const CharLm u = CharLm::uniform(std::string(1, kUnkChar) + "ABC|[{", 3);
  GenerateOptions opt;
  opt.max_chars = 64;
  EXPECT_THROW(generate_with_emotion(u, QuadrantLabel::from_quadrant(1), kCode, AblationMask::full(), 1, opt),
               ExhaustedRetries);
}

TEST(Generate, UnseenLabelFailsFast) {
  const CharLm m =
      CharLm::train({record_for(parse_abc("X:1\nL:1/8\nM:4/4\nK:D\ndefg a2 f2|e2 c2 d4|]\n"), 1)}, 6, 1e-9);
  EXPECT_THROW(generate_with_emotion(m, QuadrantLabel::from_quadrant(3), kCode, AblationMask::full(), 1), UnseenLabel);
  EXPECT_NO_THROW(generate_with_emotion(m, QuadrantLabel::from_quadrant(1), kCode, AblationMask::full(), 1));
}
