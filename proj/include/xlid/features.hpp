#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "xlid/audio_io.hpp"

namespace xlid {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

enum class FeatureKind : std::uint8_t { log_mel = 0, mfcc = 1 };

/// T x F per-frame features.
struct FeatureMatrix {
  Matrix values;
  double frame_shift_ms = 10.0;
  FeatureKind kind = FeatureKind::log_mel;

  std::size_t frames() const { return values.rows; }
  std::size_t dim() const { return values.cols; }
};

struct FeatureConfig {
  int n_mels = 24;
  std::optional<int> n_mfcc;
  double frame_len_ms = 25.0;
  double frame_shift_ms = 10.0;
  double preemphasis = 0.97;
  int fft_size = 512;
  bool mean_normalize = true;

  /// Model input width F.
  int feature_dim() const { return n_mfcc.value_or(n_mels); }
  std::size_t frame_length(int sample_rate) const;
  std::size_t frame_hop(int sample_rate) const;
  /// Throws InvalidConfig on inconsistent settings for the given rate.
  void validate(int sample_rate) const;
};

inline constexpr double kLogFloor = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// y[n] = x[n] - alpha * x[n-1], y[0] = x[0].
std::vector<double> preemphasize(std::span<const double> x, double alpha);

/// Frames in a signal of n samples; 0 when shorter than one frame.
std::size_t frame_count(std::size_t n_samples, int sample_rate, const FeatureConfig& cfg);

/// Pre-emphasized, Hamming-windowed frames, one per row.
Matrix frame_signal(const AudioClip& clip, const FeatureConfig& cfg);

/// Triangular mel filter weights, n_mels x (fft_size/2 + 1), 20 Hz to Nyquist.
Matrix mel_filterbank(const FeatureConfig& cfg, int sample_rate);

FeatureMatrix log_mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg);

/// Orthonormal DCT-II along the feature axis, keeping the first n_mfcc terms.
FeatureMatrix mfcc(const FeatureMatrix& feat, int n_mfcc);

/// Subtracts the per-feature mean over time.
FeatureMatrix mean_normalize(const FeatureMatrix& feat);

/// Applies the post-filterbank stages selected by cfg (MFCC, mean
/// normalization) to a raw log-mel matrix. Used after cropping.
FeatureMatrix finalize_features(FeatureMatrix log_mel, const FeatureConfig& cfg);

/// log_mel_spectrogram followed by finalize_features.
FeatureMatrix extract_features(const AudioClip& clip, const FeatureConfig& cfg);

/// Rows [begin, begin + count) of feat.
FeatureMatrix crop_frames(const FeatureMatrix& feat, std::size_t begin, std::size_t count);

/// Binary feature cache: "XLF1", T u32, F u32, frame_shift_ms f32, kind u8,
/// then T*F little-endian f32 row-major.
void write_feature_cache(const FeatureMatrix& feat, const std::filesystem::path& path);
FeatureMatrix read_feature_cache(const std::filesystem::path& path);

}  // namespace xlid
