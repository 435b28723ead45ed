#include "xlid/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

#include "byte_io.hpp"
#include "xlid/errors.hpp"

namespace xlid {
namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr double kMinMelHz = 20.0;

}  // namespace

std::size_t FeatureConfig::frame_length(int sample_rate) const {
  return static_cast<std::size_t>(std::llround(frame_len_ms * sample_rate / 1000.0));
}

std::size_t FeatureConfig::frame_hop(int sample_rate) const {
  return static_cast<std::size_t>(std::llround(frame_shift_ms * sample_rate / 1000.0));
}

void FeatureConfig::validate(int sample_rate) const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (n_mels < 1) fail("n_mels must be >= 1");
  if (n_mfcc && (*n_mfcc < 1 || *n_mfcc > n_mels)) fail("n_mfcc must lie in [1, n_mels]");
  if (!(frame_len_ms > 0.0) || !(frame_shift_ms > 0.0)) fail("frame timings must be positive");
  if (frame_shift_ms > frame_len_ms) fail("frame_shift_ms exceeds frame_len_ms");
  if (!(preemphasis >= 0.0 && preemphasis < 1.0)) fail("preemphasis must lie in [0, 1)");
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) fail("fft_size must be a power of two");
  if (frame_hop(sample_rate) == 0) fail("frame shift rounds to zero samples");
  if (static_cast<std::size_t>(fft_size) < frame_length(sample_rate)) {
    fail("fft_size smaller than frame length");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> preemphasize(std::span<const double> x, double alpha) {
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t n = 1; n < x.size(); ++n) y[n] = x[n] - alpha * x[n - 1];
  return y;
}

std::size_t frame_count(std::size_t n_samples, int sample_rate, const FeatureConfig& cfg) {
  const std::size_t len = cfg.frame_length(sample_rate);
  const std::size_t hop = cfg.frame_hop(sample_rate);
  if (n_samples < len || hop == 0) return 0;
  return 1 + (n_samples - len) / hop;
}

Matrix frame_signal(const AudioClip& clip, const FeatureConfig& cfg) {
  cfg.validate(clip.sample_rate);
  const std::size_t len = cfg.frame_length(clip.sample_rate);
  const std::size_t hop = cfg.frame_hop(clip.sample_rate);
  const std::size_t count = frame_count(clip.size(), clip.sample_rate, cfg);
  if (count == 0) {
    throw Error(ErrorCode::TooShort, clip.source_id + " is shorter than one frame");
  }
  const std::vector<double> emph = preemphasize(clip.samples, cfg.preemphasis);

  std::vector<double> window(len);
  for (std::size_t n = 0; n < len; ++n) {
    window[n] = len == 1 ? 1.0
                         : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (len - 1));
  }
  Matrix frames(count, len);
  for (std::size_t t = 0; t < count; ++t) {
    const double* src = emph.data() + t * hop;
    auto dst = frames.row(t);
    for (std::size_t n = 0; n < len; ++n) dst[n] = src[n] * window[n];
  }
  return frames;
}

Matrix mel_filterbank(const FeatureConfig& cfg, int sample_rate) {
  const std::size_t bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double lo = hz_to_mel(kMinMelHz);
  const double hi = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (edges.size() - 1));
  }
  Matrix fb(static_cast<std::size_t>(cfg.n_mels), bins);
  for (std::size_t m = 0; m < fb.rows; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

FeatureMatrix log_mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg) {
  const Matrix frames = frame_signal(clip, cfg);
  const Matrix fb = mel_filterbank(cfg, clip.sample_rate);
  const auto n_fft = static_cast<std::size_t>(cfg.fft_size);
  const std::size_t bins = n_fft / 2 + 1;

  double* in = fftw_alloc_real(n_fft);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in, out, FFTW_ESTIMATE);
  }

  FeatureMatrix feat;
  feat.values = Matrix(frames.rows, fb.rows);
  feat.frame_shift_ms = cfg.frame_shift_ms;
  feat.kind = FeatureKind::log_mel;
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < frames.rows; ++t) {
    std::fill(in, in + n_fft, 0.0);
    auto src = frames.row(t);
    std::copy(src.begin(), src.end(), in);
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    for (std::size_t m = 0; m < fb.rows; ++m) {
      double e = 0.0;
      auto w = fb.row(m);
      for (std::size_t k = 0; k < bins; ++k) e += w[k] * power[k];
      feat.values(t, m) = std::log(e + kLogFloor);
    }
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return feat;
}

FeatureMatrix mfcc(const FeatureMatrix& feat, int n_mfcc) {
  if (feat.kind != FeatureKind::log_mel) {
    throw Error(ErrorCode::DimensionMismatch, "mfcc expects log-mel input");
  }
  const std::size_t f = feat.dim();
  if (n_mfcc < 1 || static_cast<std::size_t>(n_mfcc) > f) {
    throw Error(ErrorCode::DimensionMismatch,
                "n_mfcc " + std::to_string(n_mfcc) + " exceeds " + std::to_string(f) + " bins");
  }
  // FFTW's REDFT10 is the unnormalized DCT-II, 2 * sum x[n] cos(pi k (2n+1) / 2N).
  double* in = fftw_alloc_real(f);
  double* out = fftw_alloc_real(f);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_r2r_1d(static_cast<int>(f), in, out, FFTW_REDFT10, FFTW_ESTIMATE);
  }
  const double s0 = std::sqrt(1.0 / (4.0 * f));
  const double sk = std::sqrt(1.0 / (2.0 * f));

  FeatureMatrix res;
  res.values = Matrix(feat.frames(), static_cast<std::size_t>(n_mfcc));
  res.frame_shift_ms = feat.frame_shift_ms;
  res.kind = FeatureKind::mfcc;
  for (std::size_t t = 0; t < feat.frames(); ++t) {
    auto src = feat.values.row(t);
    std::copy(src.begin(), src.end(), in);
    fftw_execute(plan);
    for (int k = 0; k < n_mfcc; ++k) res.values(t, k) = out[k] * (k == 0 ? s0 : sk);
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return res;
}

FeatureMatrix mean_normalize(const FeatureMatrix& feat) {
  FeatureMatrix res = feat;
  const std::size_t t_count = feat.frames();
  for (std::size_t c = 0; c < feat.dim(); ++c) {
    double sum = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) sum += feat.values(t, c);
    const double mean = sum / static_cast<double>(t_count);
    for (std::size_t t = 0; t < t_count; ++t) res.values(t, c) -= mean;
  }
  return res;
}

FeatureMatrix finalize_features(FeatureMatrix log_mel, const FeatureConfig& cfg) {
  if (cfg.n_mfcc) log_mel = mfcc(log_mel, *cfg.n_mfcc);
  if (cfg.mean_normalize) log_mel = mean_normalize(log_mel);
  return log_mel;
}

FeatureMatrix extract_features(const AudioClip& clip, const FeatureConfig& cfg) {
  return finalize_features(log_mel_spectrogram(clip, cfg), cfg);
}

FeatureMatrix crop_frames(const FeatureMatrix& feat, std::size_t begin, std::size_t count) {
  if (begin + count > feat.frames()) {
    throw Error(ErrorCode::TooShort, "crop exceeds feature length");
  }
  FeatureMatrix res;
  res.frame_shift_ms = feat.frame_shift_ms;
  res.kind = feat.kind;
  res.values = Matrix(count, feat.dim());
  std::copy_n(feat.values.data.begin() + static_cast<std::ptrdiff_t>(begin * feat.dim()),
              count * feat.dim(), res.values.data.begin());
  return res;
}

void write_feature_cache(const FeatureMatrix& feat, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write("XLF1", 4);
  detail::write_u32(out, static_cast<std::uint32_t>(feat.frames()));
  detail::write_u32(out, static_cast<std::uint32_t>(feat.dim()));
  detail::write_f32(out, static_cast<float>(feat.frame_shift_ms));
  const auto kind = static_cast<std::uint8_t>(feat.kind);
  out.write(reinterpret_cast<const char*>(&kind), 1);
  for (double v : feat.values.data) detail::write_f32(out, static_cast<float>(v));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

FeatureMatrix read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  const std::string what = "feature cache " + path.string();
  if (detail::read_string(in, 4, what) != "XLF1") {
    throw Error(ErrorCode::MalformedHeader, "bad magic in " + path.string());
  }
  const auto t = detail::read_pod<std::uint32_t>(in, what);
  const auto f = detail::read_pod<std::uint32_t>(in, what);
  FeatureMatrix feat;
  feat.frame_shift_ms = detail::read_pod<float>(in, what);
  const auto kind = detail::read_pod<std::uint8_t>(in, what);
  if (kind > 1) throw Error(ErrorCode::MalformedHeader, "unknown feature kind in " + path.string());
  feat.kind = static_cast<FeatureKind>(kind);
  feat.values = Matrix(t, f);
  for (double& v : feat.values.data) v = detail::read_pod<float>(in, what);
  return feat;
}

}  // namespace xlid
