#include <cstring>
#include <fstream>

#include "test_support.hpp"
#include "xlid/audio_io.hpp"

namespace xlid {
namespace {

using test::expect_error;
using test::TempDir;

// Hand-assembled RIFF/WAVE bytes, independent of write_wav.
std::vector<char> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                            std::uint16_t bits, const std::vector<char>& data) {
  std::vector<char> out;
  auto put = [&](const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    out.insert(out.end(), c, c + n);
  };
  auto u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto u16 = [&](std::uint16_t v) { put(&v, 2); };
  put("RIFF", 4);
  u32(static_cast<std::uint32_t>(36 + data.size()));
  put("WAVE", 4);
  put("fmt ", 4);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  put("data", 4);
  u32(static_cast<std::uint32_t>(data.size()));
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

template <typename T>
std::vector<char> pack(const std::vector<T>& values) {
  std::vector<char> out(values.size() * sizeof(T));
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

void dump(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(ReadWav, Int16MaxScalesByTypeMaximum) {
  TempDir dir;
  dump(dir / "a.wav", wav_bytes(1, 1, 16000, 16, pack<std::int16_t>({32767})));
  const auto clip = read_wav(dir / "a.wav");
  ASSERT_EQ(clip.size(), 1u);
  EXPECT_NEAR(clip.samples[0], 0.99997, 1e-5);
  EXPECT_EQ(clip.samples[0], 32767.0 / 32768.0);
  EXPECT_EQ(clip.sample_rate, 16000);
}

TEST(ReadWav, StereoDownmixIsChannelMean) {
  TempDir dir;
  dump(dir / "s.wav", wav_bytes(1, 2, 8000, 16, pack<std::int16_t>({1000, -1000, 3000, 1000})));
  const auto clip = read_wav(dir / "s.wav");
  ASSERT_EQ(clip.size(), 2u);
  EXPECT_EQ(clip.samples[0], 0.0);
  EXPECT_DOUBLE_EQ(clip.samples[1], 2000.0 / 32768.0);
  EXPECT_EQ(clip.sample_rate, 8000);
}

TEST(ReadWav, Float32Mono) {
  TempDir dir;
  dump(dir / "f.wav", wav_bytes(3, 1, 16000, 32, pack<float>({0.25f, -0.5f, 1.0f})));
  const auto clip = read_wav(dir / "f.wav");
  ASSERT_EQ(clip.size(), 3u);
  EXPECT_EQ(clip.samples[0], 0.25);
  EXPECT_EQ(clip.samples[1], -0.5);
  EXPECT_EQ(clip.samples[2], 1.0);
}

TEST(ReadWav, Errors) {
  TempDir dir;
  dump(dir / "junk.wav", {'n', 'o', 'p', 'e', 0, 0, 0, 0, 'W', 'A', 'V', 'E'});
  expect_error(ErrorCode::MalformedHeader, [&] { read_wav(dir / "junk.wav"); });
  dump(dir / "u8.wav", wav_bytes(1, 1, 16000, 8, {1, 2, 3}));
  expect_error(ErrorCode::UnsupportedEncoding, [&] { read_wav(dir / "u8.wav"); });
  dump(dir / "alaw.wav", wav_bytes(6, 1, 16000, 16, pack<std::int16_t>({1})));
  expect_error(ErrorCode::UnsupportedEncoding, [&] { read_wav(dir / "alaw.wav"); });
  dump(dir / "empty.wav", wav_bytes(1, 1, 16000, 16, {}));
  expect_error(ErrorCode::EmptyAudio, [&] { read_wav(dir / "empty.wav"); });
  expect_error(ErrorCode::IoFailure, [&] { read_wav(dir / "missing.wav"); });
}

TEST(WriteWav, HeaderMirrorsFields) {
  TempDir dir;
  write_wav(test::sine(440, 1.0), dir / "h.wav");
  const auto bytes = slurp(dir / "h.wav");
  ASSERT_EQ(bytes.size(), 44u + 32000u);
  std::uint32_t rate = 0, data_len = 0;
  std::uint16_t channels = 0, bits = 0;
  std::memcpy(&channels, bytes.data() + 22, 2);
  std::memcpy(&rate, bytes.data() + 24, 4);
  std::memcpy(&bits, bytes.data() + 34, 2);
  std::memcpy(&data_len, bytes.data() + 40, 4);
  EXPECT_EQ(channels, 1);
  EXPECT_EQ(rate, 16000u);
  EXPECT_EQ(bits, 16);
  EXPECT_EQ(data_len / 2, 16000u);
}

TEST(WriteWav, ZeroClipHasZeroData) {
  TempDir dir;
  AudioClip z;
  z.samples.assign(100, 0.0);
  write_wav(z, dir / "z.wav");
  const auto bytes = slurp(dir / "z.wav");
  ASSERT_EQ(bytes.size(), 244u);
  for (std::size_t i = 44; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(WriteWav, RoundTripWithinOneLsb) {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto clip = test::random_clip(4000 + seed * 37, seed, 1.0);
    clip.samples[0] = 1.0;
    clip.samples[1] = -1.0;
    write_wav(clip, dir / "r.wav");
    const auto back = read_wav(dir / "r.wav");
    ASSERT_EQ(back.size(), clip.size());
    for (std::size_t i = 0; i < clip.size(); ++i) {
      ASSERT_LE(std::abs(back.samples[i] - clip.samples[i]), 1.0 / 32768.0) << i;
    }
  }
  const auto tone = test::sine(440, 1.0);
  write_wav(tone, dir / "t.wav");
  const auto back = read_wav(dir / "t.wav");
  for (std::size_t i = 0; i < tone.size(); ++i) ASSERT_LE(std::abs(back.samples[i] - tone.samples[i]), 1.0 / 32768.0);
}

TEST(WriteWav, RejectsInvalidClips) {
  TempDir dir;
  AudioClip bad;
  bad.samples = {0.5, 1.5};
  expect_error(ErrorCode::InvalidArgument, [&] { write_wav(bad, dir / "b.wav"); });
  expect_error(ErrorCode::IoFailure, [&] { write_wav(test::sine(100, 0.01), dir / "no" / "such" / "x.wav"); });
}

TEST(Resample, IdentityAtSameRate) {
  const auto clip = test::random_clip(1234, 3);
  const auto out = resample(clip, clip.sample_rate);
  EXPECT_EQ(out.samples, clip.samples);
}

TEST(Resample, LengthLawAndDuration) {
  const auto clip = test::sine(440, 1.0, 8000);
  EXPECT_EQ(resample(clip, 16000).size(), 16000u);
  for (int target : {11025, 22050, 44100, 7000, 16001}) {
    for (std::size_t n : {1u, 17u, 999u, 8000u}) {
      AudioClip c = test::random_clip(n, n);
      c.sample_rate = 8000;
      const auto out = resample(c, target);
      EXPECT_EQ(out.sample_rate, target);
      EXPECT_EQ(out.size(), static_cast<std::size_t>(std::llround(static_cast<double>(n) * target / 8000.0)));
      EXPECT_LT(std::abs(static_cast<double>(out.size()) / target - static_cast<double>(n) / 8000.0), 1.0 / target);
    }
  }
}

TEST(Resample, DownUpRoundTripCorrelates) {
  const auto clip = test::sine(440, 1.0);
  const auto back = resample(resample(clip, 8000), 16000);
  ASSERT_EQ(back.size(), clip.size());
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    xy += clip.samples[i] * back.samples[i];
    xx += clip.samples[i] * clip.samples[i];
    yy += back.samples[i] * back.samples[i];
  }
  EXPECT_GT(xy / std::sqrt(xx * yy), 0.99);
}

TEST(Trim, SilenceIsEmptyAfterTrim) {
  AudioClip s;
  s.samples.assign(16000, 0.0);
  expect_error(ErrorCode::EmptyAfterTrim, [&] { trim_dead_segments(s); });
}

TEST(Trim, LoudClipUnchanged) {
  const auto clip = test::sine(300, 0.5);
  EXPECT_EQ(trim_dead_segments(clip).samples, clip.samples);
}

TEST(Trim, ToneSilenceToneKeepsTwoSeconds) {
  auto a = test::sine(440, 1.0);
  const auto b = test::sine(440, 1.0);
  a.samples.insert(a.samples.end(), 16000, 0.0);
  a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
  const auto out = trim_dead_segments(a, 25.0, -40.0);
  EXPECT_LE(std::abs(static_cast<double>(out.size()) - 32000.0), 400.0);
}

TEST(Trim, Idempotent) {
  auto clip = test::sine(200, 0.3);
  for (std::size_t i = 1000; i < 3000; ++i) clip.samples[i] *= 1e-4;
  const auto once = trim_dead_segments(clip);
  EXPECT_LT(once.size(), clip.size());
  EXPECT_EQ(trim_dead_segments(once).samples, once.samples);
}

TEST(LoadCanonical, ResamplesTo16k) {
  TempDir dir;
  write_wav(test::sine(440, 0.5, 8000), dir / "c.wav");
  const auto clip = load_canonical(dir / "c.wav");
  EXPECT_EQ(clip.sample_rate, kCanonicalSampleRate);
  EXPECT_EQ(clip.size(), 8000u);
}

}  // namespace
}  // namespace xlid
