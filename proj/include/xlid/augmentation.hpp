#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xlid/audio_io.hpp"
#include "xlid/dataset.hpp"

namespace xlid {

enum class NoiseKind { none, white, pink, gaussian };

const char* to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

struct AugmentSpec {
  std::vector<double> speed_factors{0.9, 1.0, 1.1};
  std::vector<double> pitch_semitones{-2.0, -1.0, 1.0, 2.0};
  std::vector<NoiseKind> noise_kinds{NoiseKind::gaussian};
  double snr_db_min = 5.0;
  double snr_db_max = 20.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
  /// Original plus one clip per non-unit speed, pitch shift and noise kind.
  std::size_t outputs_per_clip() const;
};

/// Rate-based speed change: tempo and pitch both scale by `factor`. Output
/// length is round(n / factor); the sample rate is unchanged.
AudioClip speed_perturb(const AudioClip& clip, double factor);

/// Waveform-similarity overlap-add time stretch to exactly target_len
/// samples, Hann window of window_ms, synthesis hop of hop_ms.
AudioClip time_stretch(const AudioClip& clip, std::size_t target_len,
                       double hop_ms = 10.0, double window_ms = 40.0);

/// Scales pitch by 2^(semitones/12) and keeps the duration; |semitones| <= 6.
AudioClip pitch_shift(const AudioClip& clip, double semitones);

/// Unit-less noise realization of n samples.
std::vector<double> generate_noise(NoiseKind kind, std::size_t n, std::uint64_t seed);

struct NoisyClip {
  AudioClip mixed;            // clamped to [-1, 1]
  std::vector<double> noise;  // scaled noise exactly as added before clamping
};

/// Adds seeded noise at the requested SNR (measured before clamping).
/// NoiseKind::none returns the clip unchanged.
NoisyClip add_noise_detailed(const AudioClip& clip, NoiseKind kind, double snr_db,
                             std::uint64_t seed);
AudioClip add_noise(const AudioClip& clip, NoiseKind kind, double snr_db, std::uint64_t seed);

/// Mixes a user-supplied noise recording at the requested SNR, looping it
/// from a seeded offset.
AudioClip mix_noise_clip(const AudioClip& clip, const AudioClip& noise, double snr_db,
                         std::uint64_t seed);

/// Writes the original and every perturbation of each clip to out_dir and
/// returns the manifest of the written files, labels preserved.
Manifest augment_corpus(const Manifest& manifest, const AugmentSpec& spec,
                        const std::filesystem::path& out_dir);

}  // namespace xlid
