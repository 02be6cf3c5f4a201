/**
 * @file render.hpp
 * @brief Format-0 Standard MIDI File writer and a plain sine renderer used for the RMS feature.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "emogen/score.hpp"

namespace emogen {

inline constexpr int kTicksPerQuarter = 480;
inline constexpr int kSampleRate = 44100;
inline constexpr double kDefaultTempo = 120.0;
inline constexpr int kBaseVelocity = 64;

/// A score ready for playback: the notes plus the applied tempo and MIDI velocity.
struct PerformanceScore {
  Score score;
  double tempo_bpm = kDefaultTempo;
  int velocity = kBaseVelocity;

  static PerformanceScore from(const Score& s, int velocity = kBaseVelocity) {
    return PerformanceScore{s, s.tempo_bpm.value_or(kDefaultTempo), velocity};
  }
  friend bool operator==(const PerformanceScore&, const PerformanceScore&) = default;
};

/// A sounding event after tie merging: onset and length in quarter notes.
struct TimedNote {
  int pitch;
  Rational onset;
  Rational duration;
};

/// Flattens the score into sounding events, merging tied notes of equal pitch.
inline std::vector<TimedNote> timed_notes(const Score& score) {
  std::vector<TimedNote> out;
  Rational clock{0};
  bool extend = false;
  for (const auto& m : score.measures) {
    for (const auto& n : m.notes) {
      if (!n.is_rest()) {
        if (extend && !out.empty() && out.back().pitch == n.pitch->midi()) out.back().duration += n.duration;
        else out.push_back({n.pitch->midi(), clock, n.duration});
        extend = n.tie_to_next;
      } else {
        extend = false;
      }
      clock += n.duration;
    }
  }
  return out;
}

namespace midi_detail {

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t value) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = value & 0x7f;
  while ((value >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>(0x80 | (value & 0x7f));
  while (n > 0) out.push_back(buf[--n]);
}

inline void put_be(std::vector<std::uint8_t>& out, std::uint32_t value, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xff));
}

inline std::int64_t ticks_at(const Rational& quarters) {
  const Rational t = quarters * kTicksPerQuarter;
  return t.numerator() / t.denominator();
}

}  // namespace midi_detail

/// Encodes a single-track (format 0) SMF at 480 ticks per quarter with one tempo event.
inline std::vector<std::uint8_t> to_midi(const PerformanceScore& perf) {
  using namespace midi_detail;
  std::vector<std::uint8_t> track;
  const auto us_per_quarter = static_cast<std::uint32_t>(std::lround(60'000'000.0 / perf.tempo_bpm));
  put_vlq(track, 0);
  track.insert(track.end(), {0xFF, 0x51, 0x03});
  put_be(track, us_per_quarter, 3);

  const auto velocity = static_cast<std::uint8_t>(std::clamp(perf.velocity, 1, 127));
  std::int64_t now = 0;
  for (const auto& n : timed_notes(perf.score)) {
    const std::int64_t on = ticks_at(n.onset);
    const std::int64_t off = ticks_at(n.onset + n.duration);
    put_vlq(track, static_cast<std::uint32_t>(on - now));
    track.insert(track.end(), {0x90, static_cast<std::uint8_t>(n.pitch), velocity});
    put_vlq(track, static_cast<std::uint32_t>(off - on));
    track.insert(track.end(), {0x80, static_cast<std::uint8_t>(n.pitch), 0x40});
    now = off;
  }
  put_vlq(track, static_cast<std::uint32_t>(ticks_at(perf.score.total_duration()) - now));
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  put_be(out, 6, 4);
  put_be(out, 0, 2);  // format 0
  put_be(out, 1, 2);  // one track
  put_be(out, kTicksPerQuarter, 2);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_be(out, static_cast<std::uint32_t>(track.size()), 4);
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

struct AudioBuffer {
  int sample_rate = kSampleRate;
  std::vector<double> samples;
};

inline double midi_frequency(int midi) { return 440.0 * std::pow(2.0, (midi - 69) / 12.0); }

/// Sine rendering: amplitude velocity/127, 10 ms linear attack and release,
/// peak-normalised only when the mix would clip.
inline AudioBuffer synthesize(const PerformanceScore& perf) {
  AudioBuffer audio;
  const double seconds_per_quarter = 60.0 / perf.tempo_bpm;
  const auto to_sample = [&](const Rational& q) {
    return static_cast<std::size_t>(std::llround(to_double(q) * seconds_per_quarter * kSampleRate));
  };
  audio.samples.assign(to_sample(perf.score.total_duration()), 0.0);
  const double amplitude = std::clamp(perf.velocity, 1, 127) / 127.0;
  const auto ramp = static_cast<std::size_t>(0.010 * kSampleRate);

  for (const auto& n : timed_notes(perf.score)) {
    const std::size_t begin = to_sample(n.onset);
    const std::size_t end = std::min(to_sample(n.onset + n.duration), audio.samples.size());
    if (end <= begin) continue;
    const std::size_t length = end - begin;
    const std::size_t edge = std::min(ramp, length / 2);
    const double step = 2.0 * std::numbers::pi * midi_frequency(n.pitch) / kSampleRate;
    for (std::size_t i = 0; i < length; ++i) {
      double envelope = 1.0;
      if (edge > 0 && i < edge) envelope = static_cast<double>(i) / static_cast<double>(edge);
      else if (edge > 0 && length - 1 - i < edge) envelope = static_cast<double>(length - 1 - i) / static_cast<double>(edge);
      audio.samples[begin + i] += amplitude * envelope * std::sin(step * static_cast<double>(i));
    }
  }
  double peak = 0.0;
  for (double s : audio.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0)
    for (double& s : audio.samples) s /= peak;
  return audio;
}

inline double rms(const AudioBuffer& audio) {
  if (audio.samples.empty()) throw EmptyBuffer();
  double sum = 0.0;
  for (double s : audio.samples) sum += s * s;
  return std::sqrt(sum / static_cast<double>(audio.samples.size()));
}

/// 16-bit little-endian PCM mono WAV.
inline std::vector<std::uint8_t> to_wav(const AudioBuffer& audio) {
  std::vector<std::uint8_t> out;
  auto le = [&](std::uint32_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  le(36 + data_bytes, 4);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  le(16, 4);
  le(1, 2);  // PCM
  le(1, 2);  // mono
  le(static_cast<std::uint32_t>(audio.sample_rate), 4);
  le(static_cast<std::uint32_t>(audio.sample_rate * 2), 4);
  le(2, 2);
  le(16, 2);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  le(data_bytes, 4);
  for (double s : audio.samples) {
    const auto v = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0));
    le(static_cast<std::uint16_t>(v), 2);
  }
  return out;
}

}  // namespace emogen
