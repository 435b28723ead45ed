#include <fstream>

#include "test_support.hpp"
#include "xlid/features.hpp"

namespace xlid {
namespace {

using test::expect_error;

FeatureMatrix random_features(std::size_t t, std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 3.0);
  FeatureMatrix m;
  m.values = Matrix(t, f);
  for (auto& v : m.values.data) v = n(rng);
  return m;
}

TEST(Framing, FrameCountFormula) {
  FeatureConfig cfg;
  EXPECT_EQ(frame_count(16000, 16000, cfg), 98u);
  EXPECT_EQ(frame_count(32000, 16000, cfg), 198u);
  EXPECT_EQ(frame_count(400, 16000, cfg), 1u);
  EXPECT_EQ(frame_count(399, 16000, cfg), 0u);
  const auto frames = frame_signal(test::sine(100, 1.0), cfg);
  EXPECT_EQ(frames.rows, 98u);
  EXPECT_EQ(frames.cols, 400u);
}

TEST(Framing, TooShort) {
  expect_error(ErrorCode::TooShort, [] { frame_signal(test::sine(100, 0.02), FeatureConfig{}); });
  expect_error(ErrorCode::TooShort, [] { log_mel_spectrogram(test::sine(100, 0.02), FeatureConfig{}); });
}

TEST(Preemphasis, ZeroAlphaIsIdentity) {
  const auto x = test::random_clip(100, 1).samples;
  EXPECT_EQ(preemphasize(x, 0.0), x);
}

TEST(Preemphasis, DcSignal) {
  const std::vector<double> dc(50, 0.4);
  const auto y = preemphasize(dc, 0.97);
  EXPECT_EQ(y[0], 0.4);
  for (std::size_t i = 1; i < y.size(); ++i) EXPECT_NEAR(y[i], 0.03 * 0.4, 1e-15);
}

TEST(Framing, HammingWindowAfterPreemphasis) {
  FeatureConfig cfg;
  const auto clip = test::random_clip(1000, 9);
  const auto frames = frame_signal(clip, cfg);
  const auto pre = preemphasize(clip.samples, cfg.preemphasis);
  const std::size_t len = 400, hop = 160;
  for (std::size_t t = 0; t < frames.rows; ++t) {
    for (std::size_t i = 0; i < len; ++i) {
      const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / (len - 1));
      ASSERT_NEAR(frames(t, i), pre[t * hop + i] * w, 1e-12);
    }
  }
}

TEST(LogMel, SilenceIsLogFloor) {
  AudioClip s;
  s.samples.assign(8000, 0.0);
  FeatureConfig cfg;
  cfg.mean_normalize = false;
  const auto feat = log_mel_spectrogram(s, cfg);
  EXPECT_EQ(feat.frames(), 48u);
  EXPECT_EQ(feat.dim(), 24u);
  for (double v : feat.values.data) EXPECT_DOUBLE_EQ(v, std::log(kLogFloor));
}

TEST(LogMel, ShapeForTwoSeconds) {
  const auto feat = log_mel_spectrogram(test::sine(500, 2.0), FeatureConfig{});
  EXPECT_EQ(feat.frames(), 198u);
  EXPECT_EQ(feat.dim(), 24u);
  EXPECT_EQ(feat.kind, FeatureKind::log_mel);
}

TEST(LogMel, ToneAtFilterCenterPeaksInThatFilter) {
  FeatureConfig cfg;
  const int n = cfg.n_mels;
  const double lo = hz_to_mel(20.0), hi = hz_to_mel(8000.0);
  for (int k : {4, 8, 12, 16, 20, 23}) {
    const double center = mel_to_hz(lo + (hi - lo) * (k + 1) / (n + 1));
    const auto feat = log_mel_spectrogram(test::sine(center, 0.5), cfg);
    std::vector<double> mean(feat.dim(), 0.0);
    for (std::size_t t = 0; t < feat.frames(); ++t) {
      for (std::size_t j = 0; j < feat.dim(); ++j) mean[j] += std::exp(feat.values(t, j));
    }
    EXPECT_EQ(std::max_element(mean.begin(), mean.end()) - mean.begin(), k) << center << " Hz";
  }
}

TEST(LogMel, FilterbankGeometry) {
  FeatureConfig cfg;
  const auto fb = mel_filterbank(cfg, 16000);
  EXPECT_EQ(fb.rows, 24u);
  EXPECT_EQ(fb.cols, 257u);
  for (std::size_t r = 0; r < fb.rows; ++r) {
    double peak = 0.0;
    for (double v : fb.row(r)) {
      EXPECT_GE(v, 0.0);
      peak = std::max(peak, v);
    }
    EXPECT_GT(peak, 0.0) << r;
    EXPECT_LE(peak, 1.0);
  }
}

TEST(LogMel, Deterministic) {
  const auto clip = test::random_clip(16000, 4);
  const auto a = extract_features(clip, FeatureConfig{});
  const auto b = extract_features(clip, FeatureConfig{});
  EXPECT_EQ(a.values.data, b.values.data);
}

TEST(Mfcc, ConstantRow) {
  FeatureMatrix m;
  m.values = Matrix(3, 24, 1.7);
  const auto c = mfcc(m, 13);
  EXPECT_EQ(c.kind, FeatureKind::mfcc);
  EXPECT_EQ(c.dim(), 13u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_NEAR(c.values(t, 0), 1.7 * std::sqrt(24.0), 1e-12);
    for (std::size_t k = 1; k < 13; ++k) EXPECT_NEAR(c.values(t, k), 0.0, 1e-12);
  }
}

double dct_basis(std::size_t k, std::size_t n, std::size_t f) {
  const double scale = k == 0 ? std::sqrt(1.0 / f) : std::sqrt(2.0 / f);
  return scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * n + 1.0) / (2.0 * f));
}

TEST(Mfcc, MatchesNaiveDct) {
  const auto m = random_features(10, 24, 11);
  const auto c = mfcc(m, 24);
  for (std::size_t t = 0; t < 10; ++t) {
    for (std::size_t k = 0; k < 24; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < 24; ++n) s += m.values(t, n) * dct_basis(k, n, 24);
      EXPECT_NEAR(c.values(t, k), s, 1e-9);
    }
  }
}

TEST(Mfcc, FullTransformInverts) {
  const auto m = random_features(6, 24, 12);
  const auto c = mfcc(m, 24);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t n = 0; n < 24; ++n) {
      double s = 0.0;
      for (std::size_t k = 0; k < 24; ++k) s += c.values(t, k) * dct_basis(k, n, 24);
      EXPECT_NEAR(s, m.values(t, n), 1e-9);
    }
  }
}

TEST(Mfcc, Errors) {
  const auto m = random_features(4, 8, 1);
  expect_error(ErrorCode::DimensionMismatch, [&] { mfcc(m, 9); });
  auto c = mfcc(m, 4);
  expect_error(ErrorCode::DimensionMismatch, [&] { mfcc(c, 2); });
}

TEST(MeanNormalize, ColumnMeansVanish) {
  const auto m = mean_normalize(random_features(50, 7, 3));
  for (std::size_t j = 0; j < 7; ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t < 50; ++t) s += m.values(t, j);
    EXPECT_LE(std::abs(s / 50.0), 1e-9);
  }
}

TEST(MeanNormalize, IdempotentAndSingleFrame) {
  const auto once = mean_normalize(random_features(20, 5, 5));
  const auto twice = mean_normalize(once);
  for (std::size_t i = 0; i < once.values.data.size(); ++i) EXPECT_NEAR(once.values.data[i], twice.values.data[i], 1e-12);
  const auto single = mean_normalize(random_features(1, 5, 6));
  for (double v : single.values.data) EXPECT_EQ(v, 0.0);
}

TEST(Features, LinearFrameGrowthAndMfccWidth) {
  FeatureConfig cfg;
  cfg.n_mfcc = 13;
  EXPECT_EQ(cfg.feature_dim(), 13);
  const auto a = extract_features(test::sine(300, 1.0), cfg);
  const auto b = extract_features(test::sine(300, 2.0), cfg);
  EXPECT_EQ(a.dim(), 13u);
  EXPECT_EQ(b.frames() - a.frames(), 100u);
}

TEST(FeatureConfig, Validation) {
  FeatureConfig cfg;
  cfg.frame_shift_ms = 30.0;
  expect_error(ErrorCode::InvalidConfig, [&] { cfg.validate(16000); });
  cfg = {};
  cfg.fft_size = 256;
  expect_error(ErrorCode::InvalidConfig, [&] { cfg.validate(16000); });
  cfg = {};
  cfg.fft_size = 600;
  expect_error(ErrorCode::InvalidConfig, [&] { cfg.validate(16000); });
  cfg = {};
  cfg.preemphasis = 1.0;
  expect_error(ErrorCode::InvalidConfig, [&] { cfg.validate(16000); });
}

TEST(FeatureCache, RoundTripWithinFloatPrecision) {
  test::TempDir dir;
  auto m = random_features(33, 24, 8);
  m.frame_shift_ms = 10.0;
  m.kind = FeatureKind::mfcc;
  write_feature_cache(m, dir / "f.xlf");
  const auto back = read_feature_cache(dir / "f.xlf");
  EXPECT_EQ(back.frames(), 33u);
  EXPECT_EQ(back.dim(), 24u);
  EXPECT_EQ(back.kind, FeatureKind::mfcc);
  EXPECT_EQ(back.frame_shift_ms, 10.0);
  for (std::size_t i = 0; i < m.values.data.size(); ++i) {
    EXPECT_EQ(back.values.data[i], static_cast<double>(static_cast<float>(m.values.data[i])));
  }
  EXPECT_EQ(std::filesystem::file_size(dir / "f.xlf"), 4u + 4 + 4 + 4 + 1 + 33 * 24 * 4);
}

TEST(FeatureCache, RejectsBadMagicAndTruncation) {
  test::TempDir dir;
  { std::ofstream(dir / "bad.xlf", std::ios::binary) << "XLF2abcdefgh"; }
  expect_error(ErrorCode::MalformedHeader, [&] { read_feature_cache(dir / "bad.xlf"); });
  write_feature_cache(random_features(3, 2, 1), dir / "t.xlf");
  std::filesystem::resize_file(dir / "t.xlf", 20);
  expect_error(ErrorCode::MalformedHeader, [&] { read_feature_cache(dir / "t.xlf"); });
}

TEST(CropFrames, SelectsRows) {
  const auto m = random_features(10, 3, 2);
  const auto c = crop_frames(m, 4, 3);
  ASSERT_EQ(c.frames(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c.values(t, j), m.values(t + 4, j));
  }
}

}  // namespace
}  // namespace xlid
