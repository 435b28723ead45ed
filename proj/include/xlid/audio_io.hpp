#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace xlid {

inline constexpr int kCanonicalSampleRate = 16000;

/// Mono PCM clip with amplitudes in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;
  std::string source_id;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws InvalidArgument unless the clip is nonempty, finite, in range and
/// has a positive rate.
void validate(const AudioClip& clip);

/// Reads 16-bit PCM or 32-bit float RIFF/WAVE, mono or stereo. Stereo is
/// averaged to mono; integer samples are divided by 32768.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Linear-interpolation resampling; output length round(n * target / rate).
AudioClip resample(const AudioClip& clip, int target_rate);

/// Drops non-overlapping frames whose RMS level (dBFS) is below the floor.
/// A trailing partial frame is judged on its own samples.
AudioClip trim_dead_segments(const AudioClip& clip, double frame_ms = 25.0,
                             double energy_floor_db = -45.0);

/// RMS level in dBFS; -inf for digital silence.
double rms_dbfs(const double* samples, std::size_t n);

/// Reads a clip and brings it to the canonical rate.
AudioClip load_canonical(const std::filesystem::path& path);

}  // namespace xlid
