#include "xlid/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "xlid/errors.hpp"

namespace xlid {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) {
    throw Error(ErrorCode::InvalidArgument,
                "sample rate must be positive in " + clip.source_id);
  }
  if (clip.samples.empty()) {
    throw Error(ErrorCode::EmptyAudio, "no samples in " + clip.source_id);
  }
  for (double s : clip.samples) {
    if (!std::isfinite(s) || s < -1.0 || s > 1.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "sample outside [-1, 1] in " + clip.source_id);
    }
  }
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::MalformedHeader, "not RIFF/WAVE: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    std::size_t len = get_u32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || len > avail) {
        throw Error(ErrorCode::MalformedHeader, "short fmt chunk: " + path.string());
      }
      const std::uint8_t* f = bytes.data() + body;
      format = get_u16(f);
      channels = get_u16(f + 2);
      rate = get_u32(f + 4);
      bits = get_u16(f + 14);
      if (format == kFormatExtensible && len >= 26) format = get_u16(f + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streaming writers leave the length at 0 or 0xFFFFFFFF.
      data_len = std::min(len, avail);
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || data == nullptr) {
    throw Error(ErrorCode::MalformedHeader, "missing fmt or data chunk: " + path.string());
  }
  if (rate == 0 || channels == 0) {
    throw Error(ErrorCode::MalformedHeader, "zero rate or channels: " + path.string());
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!(pcm16 || float32) || channels > 2) {
    throw Error(ErrorCode::UnsupportedEncoding,
                "format " + std::to_string(format) + ", " + std::to_string(bits) +
                    " bits, " + std::to_string(channels) + " channels: " + path.string());
  }

  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  if (frames == 0) throw Error(ErrorCode::EmptyAudio, path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = path.string();
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (i * channels + c) * width;
      double v;
      if (pcm16) {
        v = static_cast<std::int16_t>(get_u16(p)) / 32768.0;
      } else {
        std::uint32_t raw = get_u32(p);
        float f;
        std::memcpy(&f, &raw, sizeof f);
        if (!std::isfinite(f)) {
          throw Error(ErrorCode::UnsupportedEncoding, "non-finite sample in " + path.string());
        }
        v = std::clamp(static_cast<double>(f), -1.0, 1.0);
      }
      acc += v;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  validate(clip);
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : clip.samples) {
    long q = std::lround(s * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) {
    throw Error(ErrorCode::InvalidArgument, "target rate must be positive");
  }
  if (target_rate == clip.sample_rate) return clip;
  const std::size_t n = clip.samples.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));
  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.samples.resize(out_len);
  const double step = static_cast<double>(clip.sample_rate) / target_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    double t = i * step;
    auto k = static_cast<std::size_t>(t);
    if (k + 1 >= n) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    double frac = t - static_cast<double>(k);
    out.samples[i] = clip.samples[k] + frac * (clip.samples[k + 1] - clip.samples[k]);
  }
  return out;
}

double rms_dbfs(const double* samples, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) energy += samples[i] * samples[i];
  double rms = std::sqrt(energy / static_cast<double>(n));
  if (rms == 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(rms);
}

AudioClip trim_dead_segments(const AudioClip& clip, double frame_ms,
                             double energy_floor_db) {
  if (!(frame_ms > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "frame_ms must be positive");
  }
  const auto frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(frame_ms * clip.sample_rate / 1000.0)));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  out.samples.reserve(clip.samples.size());
  for (std::size_t start = 0; start < clip.samples.size(); start += frame) {
    std::size_t len = std::min(frame, clip.samples.size() - start);
    const double* p = clip.samples.data() + start;
    if (rms_dbfs(p, len) >= energy_floor_db) out.samples.insert(out.samples.end(), p, p + len);
  }
  if (out.samples.empty()) {
    throw Error(ErrorCode::EmptyAfterTrim, "every frame below floor in " + clip.source_id);
  }
  return out;
}

AudioClip load_canonical(const std::filesystem::path& path) {
  return resample(read_wav(path), kCanonicalSampleRate);
}

}  // namespace xlid
