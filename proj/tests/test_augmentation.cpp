#include <fstream>

#include "test_support.hpp"
#include "xlid/augmentation.hpp"
#include "xlid/dataset.hpp"

namespace xlid {
namespace {

using test::expect_error;

double power(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

TEST(SpeedPerturb, UnitFactorIsIdentity) {
  const auto clip = test::random_clip(1000, 1);
  EXPECT_EQ(speed_perturb(clip, 1.0).samples, clip.samples);
}

TEST(SpeedPerturb, LengthLaw) {
  EXPECT_EQ(speed_perturb(test::random_clip(16000, 2), 1.1).size(), 14545u);
  for (double f : {0.51, 0.9, 1.0, 1.1, 1.37, 1.99}) {
    for (std::size_t n : {10u, 999u, 16000u, 48001u}) {
      EXPECT_EQ(speed_perturb(test::random_clip(n, n), f).size(),
                static_cast<std::size_t>(std::llround(static_cast<double>(n) / f)));
    }
  }
}

TEST(SpeedPerturb, ScalesFrequency) {
  const auto out = speed_perturb(test::sine(440, 2.0), 1.1);
  EXPECT_EQ(out.sample_rate, 16000);
  const double bin = 16000.0 / 8192.0;
  EXPECT_NEAR(test::dominant_frequency(out.samples, 16000, 8192), 484.0, bin);
}

TEST(SpeedPerturb, InverseRestoresDuration) {
  for (double f : {0.8, 0.9, 1.1, 1.3}) {
    const auto clip = test::random_clip(12345, 7);
    const auto back = speed_perturb(speed_perturb(clip, f), 1.0 / f);
    EXPECT_LE(std::abs(static_cast<double>(back.size()) - 12345.0), 2.0);
  }
}

TEST(SpeedPerturb, RangeChecked) {
  const auto clip = test::random_clip(100, 1);
  for (double f : {0.5, 2.0, 0.0, -1.0, 3.0}) {
    expect_error(ErrorCode::FactorOutOfRange, [&] { speed_perturb(clip, f); });
  }
}

TEST(PitchShift, ZeroKeepsDurationAndFrequency) {
  const auto clip = test::sine(440, 1.0);
  const auto out = pitch_shift(clip, 0.0);
  EXPECT_EQ(out.size(), clip.size());
  EXPECT_NEAR(test::dominant_frequency(out.samples, 16000, 8192), 440.0, 16000.0 / 8192.0);
}

TEST(PitchShift, TwoSemitonesUp) {
  const auto out = pitch_shift(test::sine(440, 2.0), 2.0);
  EXPECT_LE(std::abs(static_cast<double>(out.size()) - 32000.0), 160.0);
  EXPECT_NEAR(test::dominant_frequency(out.samples, 16000, 8192), 440.0 * std::pow(2.0, 2.0 / 12.0),
              16000.0 / 8192.0);
}

TEST(PitchShift, DurationWithinOneHop) {
  for (double s : {-6.0, -2.0, -1.0, 1.0, 2.0, 6.0}) {
    const auto clip = test::random_clip(20000, 3);
    EXPECT_LE(std::abs(static_cast<double>(pitch_shift(clip, s).size()) - 20000.0), 160.0) << s;
  }
  const auto low = pitch_shift(test::sine(600, 1.5), -2.0);
  EXPECT_NEAR(test::dominant_frequency(low.samples, 16000, 8192), 600.0 * std::pow(2.0, -2.0 / 12.0),
              16000.0 / 8192.0);
}

TEST(PitchShift, RangeChecked) {
  const auto clip = test::sine(440, 0.5);
  expect_error(ErrorCode::ShiftOutOfRange, [&] { pitch_shift(clip, 12.0); });
  expect_error(ErrorCode::ShiftOutOfRange, [&] { pitch_shift(clip, -6.5); });
}

TEST(TimeStretch, ExactTargetLength) {
  const auto clip = test::sine(300, 1.0);
  for (std::size_t target : {8000u, 16000u, 20011u, 31999u}) {
    const auto out = time_stretch(clip, target);
    EXPECT_EQ(out.size(), target);
    for (double v : out.samples) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(AddNoise, SnrWithinTenthOfDb) {
  const auto clip = test::sine(330, 1.0, 16000, 0.3);
  for (NoiseKind kind : {NoiseKind::white, NoiseKind::pink, NoiseKind::gaussian}) {
    for (double snr : {0.0, 5.0, 10.0, 20.0}) {
      const auto r = add_noise_detailed(clip, kind, snr, 42);
      const double measured = 10.0 * std::log10(power(clip.samples) / power(r.noise));
      EXPECT_NEAR(measured, snr, 0.1) << to_string(kind) << " " << snr;
      for (double v : r.mixed.samples) ASSERT_LE(std::abs(v), 1.0);
    }
  }
}

TEST(AddNoise, Deterministic) {
  const auto clip = test::random_clip(5000, 5, 0.2);
  EXPECT_EQ(add_noise(clip, NoiseKind::pink, 7.5, 9).samples, add_noise(clip, NoiseKind::pink, 7.5, 9).samples);
  EXPECT_NE(add_noise(clip, NoiseKind::pink, 7.5, 9).samples, add_noise(clip, NoiseKind::pink, 7.5, 10).samples);
}

TEST(AddNoise, NoneIsIdentityAndSilenceRejected) {
  const auto clip = test::random_clip(100, 5);
  EXPECT_EQ(add_noise(clip, NoiseKind::none, std::numeric_limits<double>::infinity(), 1).samples, clip.samples);
  AudioClip silent;
  silent.samples.assign(100, 0.0);
  expect_error(ErrorCode::SilentSignal, [&] { add_noise(silent, NoiseKind::white, 10.0, 1); });
}

TEST(AddNoise, PinkNoiseHasFallingSpectrum) {
  const auto pink = generate_noise(NoiseKind::pink, 1 << 16, 3);
  const auto white = generate_noise(NoiseKind::white, 1 << 16, 3);
  // Energy of first differences relative to total: lower for 1/f noise.
  auto hf_ratio = [](const std::vector<double>& x) {
    double d = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) d += (x[i] - x[i - 1]) * (x[i] - x[i - 1]);
    return d / (power(x) * static_cast<double>(x.size()));
  };
  EXPECT_LT(hf_ratio(pink), 0.5 * hf_ratio(white));
}

TEST(AddNoise, GaussianAliasesWhite) {
  EXPECT_EQ(generate_noise(NoiseKind::gaussian, 64, 8), generate_noise(NoiseKind::white, 64, 8));
}

TEST(MixNoiseClip, HitsSnr) {
  const auto clip = test::sine(250, 1.0, 16000, 0.4);
  const auto noise = test::random_clip(3000, 6, 0.5);
  const auto mixed = mix_noise_clip(clip, noise, 10.0, 4);
  std::vector<double> diff(clip.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = mixed.samples[i] - clip.samples[i];
  EXPECT_NEAR(10.0 * std::log10(power(clip.samples) / power(diff)), 10.0, 0.1);
}

TEST(AugmentSpec, CountsAndValidation) {
  AugmentSpec spec;
  EXPECT_EQ(spec.outputs_per_clip(), 8u);
  spec.speed_factors = {0.4};
  expect_error(ErrorCode::FactorOutOfRange, [&] { spec.validate(); });
  spec = {};
  spec.snr_db_min = 30.0;
  expect_error(ErrorCode::InvalidArgument, [&] { spec.validate(); });
}

Manifest write_clips(const test::TempDir& dir, int per_language) {
  std::vector<ManifestEntry> entries;
  for (int l = 0; l < 2; ++l) {
    for (int i = 0; i < per_language; ++i) {
      const auto path = dir / ("l" + std::to_string(l) + "_" + std::to_string(i) + ".wav");
      write_wav(test::sine(200.0 + 100 * l + 10 * i, 0.4), path);
      entries.push_back({path.string(), "lang" + std::to_string(l), "s" + std::to_string(i), 0.4});
    }
  }
  return make_manifest(entries);
}

TEST(AugmentCorpus, CountsAndLabels) {
  test::TempDir dir;
  const auto manifest = write_clips(dir, 5);
  const auto out = augment_corpus(manifest, AugmentSpec{}, dir / "aug");
  EXPECT_EQ(out.size(), 80u);
  const auto counts = out.counts_by_language();
  EXPECT_EQ(counts.at("lang0"), 40u);
  EXPECT_EQ(counts.at("lang1"), 40u);
  EXPECT_TRUE(std::is_sorted(out.entries.begin(), out.entries.end(),
                             [](const auto& a, const auto& b) { return a.path < b.path; }));
  for (const auto& e : out.entries) EXPECT_TRUE(std::filesystem::exists(e.path));
}

TEST(AugmentCorpus, EmptyManifest) {
  test::TempDir dir;
  Manifest empty;
  EXPECT_TRUE(augment_corpus(empty, AugmentSpec{}, dir / "aug").empty());
}

TEST(AugmentCorpus, DeterministicBytes) {
  test::TempDir dir;
  const auto manifest = write_clips(dir, 1);
  AugmentSpec spec;
  spec.rng_seed = 77;
  const auto a = augment_corpus(manifest, spec, dir / "a");
  const auto b = augment_corpus(manifest, spec, dir / "b");
  ASSERT_EQ(a.size(), b.size());
  auto read = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(read(a.entries[i].path), read(b.entries[i].path));
}

TEST(AugmentCorpus, PerClipErrorsNameTheSource) {
  test::TempDir dir;
  auto manifest = write_clips(dir, 1);
  manifest.entries[0].path = (dir / "gone.wav").string();
  try {
    augment_corpus(manifest, AugmentSpec{}, dir / "aug");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
    EXPECT_NE(std::string(e.what()).find("gone.wav"), std::string::npos);
  }
}

}  // namespace
}  // namespace xlid
