#include "xlid/augmentation.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <limits>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "xlid/errors.hpp"
#include "xlid/random.hpp"

namespace xlid {
namespace {

double interp(const std::vector<double>& x, double t) {
  if (t <= 0.0) return x.front();
  auto k = static_cast<std::size_t>(t);
  if (k + 1 >= x.size()) return x.back();
  double frac = t - static_cast<double>(k);
  return x[k] + frac * (x[k + 1] - x[k]);
}

double mean_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

// Voss-McCartney: row k is redrawn every 2^k samples; the sum of rows plus a
// per-sample white term approximates a 1/f spectrum.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  constexpr int kRows = 16;
  std::normal_distribution<double> normal;
  std::array<double, kRows> rows{};
  double running = 0.0;
  for (double& r : rows) {
    r = normal(rng);
    running += r;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      int k = std::countr_zero(static_cast<unsigned long long>(i));
      if (k < kRows) {
        running -= rows[static_cast<std::size_t>(k)];
        rows[static_cast<std::size_t>(k)] = normal(rng);
        running += rows[static_cast<std::size_t>(k)];
      }
    }
    out[i] = running + normal(rng);
  }
  return out;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::showpos << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::gaussian: return "gaussian";
  }
  return "none";
}

NoiseKind parse_noise_kind(const std::string& name) {
  for (NoiseKind k : {NoiseKind::none, NoiseKind::white, NoiseKind::pink, NoiseKind::gaussian}) {
    if (name == to_string(k)) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown noise kind '" + name + "'");
}

void AugmentSpec::validate() const {
  for (double f : speed_factors) {
    if (!(f > 0.5 && f < 2.0)) {
      throw Error(ErrorCode::FactorOutOfRange, "speed factor " + std::to_string(f));
    }
  }
  for (double s : pitch_semitones) {
    if (!(std::abs(s) <= 6.0)) throw Error(ErrorCode::ShiftOutOfRange, std::to_string(s));
  }
  if (!(snr_db_min <= snr_db_max) || !std::isfinite(snr_db_min) || !std::isfinite(snr_db_max)) {
    throw Error(ErrorCode::InvalidArgument, "empty SNR interval");
  }
}

std::size_t AugmentSpec::outputs_per_clip() const {
  auto non_unit = static_cast<std::size_t>(
      std::count_if(speed_factors.begin(), speed_factors.end(), [](double f) { return f != 1.0; }));
  return 1 + non_unit + pitch_semitones.size() + noise_kinds.size();
}

AudioClip speed_perturb(const AudioClip& clip, double factor) {
  if (!(factor > 0.5 && factor < 2.0)) {
    throw Error(ErrorCode::FactorOutOfRange, "speed factor " + std::to_string(factor));
  }
  validate(clip);
  if (factor == 1.0) return clip;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.size()) / factor));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  out.samples.resize(std::max<std::size_t>(out_len, 1));
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = interp(clip.samples, static_cast<double>(i) * factor);
  }
  return out;
}

AudioClip time_stretch(const AudioClip& clip, std::size_t target_len, double hop_ms,
                       double window_ms) {
  validate(clip);
  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(hop_ms * clip.sample_rate / 1000.0)));
  const auto win = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(window_ms * clip.sample_rate / 1000.0)));
  const std::ptrdiff_t tolerance = static_cast<std::ptrdiff_t>(hop / 2);
  const auto& x = clip.samples;
  const auto n_in = static_cast<std::ptrdiff_t>(x.size());
  auto at = [&](std::ptrdiff_t i) { return i >= 0 && i < n_in ? x[static_cast<std::size_t>(i)] : 0.0; };

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 0.5) / win);
  }
  const double ratio = static_cast<double>(x.size()) / static_cast<double>(std::max<std::size_t>(target_len, 1));
  const std::size_t frames = target_len / hop + win / hop + 1;

  std::vector<double> acc(frames * hop + win, 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  std::ptrdiff_t prev = 0;
  for (std::size_t k = 0; k < frames; ++k) {
    const auto nominal = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(k * hop) * ratio));
    std::ptrdiff_t best = nominal;
    if (k > 0) {
      // Pick the shift whose segment best continues the previous one.
      const std::ptrdiff_t natural = prev + static_cast<std::ptrdiff_t>(hop);
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::ptrdiff_t d = -tolerance; d <= tolerance; ++d) {
        double score = 0.0;
        for (std::size_t i = 0; i < win; ++i) {
          auto ii = static_cast<std::ptrdiff_t>(i);
          score += at(nominal + d + ii) * at(natural + ii) * window[i];
        }
        if (score > best_score) {
          best_score = score;
          best = nominal + d;
        }
      }
    }
    prev = best;
    const std::size_t base = k * hop;
    for (std::size_t i = 0; i < win; ++i) {
      acc[base + i] += window[i] * at(best + static_cast<std::ptrdiff_t>(i));
      wsum[base + i] += window[i];
    }
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  out.samples.resize(target_len);
  for (std::size_t i = 0; i < target_len; ++i) {
    out.samples[i] = wsum[i] > 1e-8 ? std::clamp(acc[i] / wsum[i], -1.0, 1.0) : 0.0;
  }
  return out;
}

AudioClip pitch_shift(const AudioClip& clip, double semitones) {
  if (!(std::abs(semitones) <= 6.0)) {
    throw Error(ErrorCode::ShiftOutOfRange, "pitch shift of " + std::to_string(semitones) + " semitones");
  }
  validate(clip);
  if (semitones == 0.0) return clip;
  const double ratio = std::pow(2.0, semitones / 12.0);
  // Reading the waveform `ratio` times faster raises every frequency by
  // `ratio`; the time stretch then restores the original length.
  AudioClip faster = speed_perturb(clip, ratio);
  return time_stretch(faster, clip.size());
}

std::vector<double> generate_noise(NoiseKind kind, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  switch (kind) {
    case NoiseKind::none: return std::vector<double>(n, 0.0);
    case NoiseKind::pink: return pink_noise(n, rng);
    case NoiseKind::white:
    case NoiseKind::gaussian: {
      std::normal_distribution<double> normal;
      std::vector<double> out(n);
      for (double& v : out) v = normal(rng);
      return out;
    }
  }
  return {};
}

NoisyClip add_noise_detailed(const AudioClip& clip, NoiseKind kind, double snr_db,
                             std::uint64_t seed) {
  validate(clip);
  if (kind == NoiseKind::none) return {clip, std::vector<double>(clip.size(), 0.0)};
  const double p_signal = mean_power(clip.samples);
  if (p_signal == 0.0) throw Error(ErrorCode::SilentSignal, clip.source_id);
  if (!std::isfinite(snr_db)) throw Error(ErrorCode::InvalidArgument, "SNR must be finite");

  std::vector<double> noise = generate_noise(kind, clip.size(), seed);
  const double p_raw = mean_power(noise);
  const double scale = std::sqrt(p_signal / (p_raw * std::pow(10.0, snr_db / 10.0)));
  for (double& v : noise) v *= scale;

  NoisyClip out{clip, std::move(noise)};
  for (std::size_t i = 0; i < clip.size(); ++i) {
    out.mixed.samples[i] = std::clamp(clip.samples[i] + out.noise[i], -1.0, 1.0);
  }
  return out;
}

AudioClip add_noise(const AudioClip& clip, NoiseKind kind, double snr_db, std::uint64_t seed) {
  return add_noise_detailed(clip, kind, snr_db, seed).mixed;
}

AudioClip mix_noise_clip(const AudioClip& clip, const AudioClip& noise, double snr_db,
                         std::uint64_t seed) {
  validate(clip);
  validate(noise);
  const AudioClip matched = resample(noise, clip.sample_rate);
  const double p_signal = mean_power(clip.samples);
  if (p_signal == 0.0) throw Error(ErrorCode::SilentSignal, clip.source_id);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, matched.size() - 1);
  const std::size_t start = pick(rng);
  std::vector<double> seg(clip.size());
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = matched.samples[(start + i) % matched.size()];
  const double p_noise = mean_power(seg);
  if (p_noise == 0.0) throw Error(ErrorCode::SilentSignal, noise.source_id);
  const double scale = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  AudioClip out = clip;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    out.samples[i] = std::clamp(clip.samples[i] + scale * seg[i], -1.0, 1.0);
  }
  return out;
}

Manifest augment_corpus(const Manifest& manifest, const AugmentSpec& spec,
                        const std::filesystem::path& out_dir) {
  spec.validate();
  Manifest out;
  out.languages = manifest.languages;
  if (manifest.empty()) return out;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  const std::size_t n = manifest.size();
  std::vector<std::vector<ManifestEntry>> produced(n);
  std::vector<std::optional<Error>> failures(n);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestEntry& src = manifest.entries[i];
    try {
      AudioClip clip = load_canonical(src.path);
      std::ostringstream stem;
      stem << std::setw(5) << std::setfill('0') << i << '_'
           << std::filesystem::path(src.path).stem().string();
      auto emit = [&](const AudioClip& c, const std::string& suffix) {
        auto path = out_dir / (stem.str() + "__" + suffix + ".wav");
        write_wav(c, path);
        produced[i].push_back({path.string(), src.language, src.speaker_id, c.duration_s()});
      };
      emit(clip, "orig");
      for (double f : spec.speed_factors) {
        if (f != 1.0) emit(speed_perturb(clip, f), "speed" + format_number(f));
      }
      for (double s : spec.pitch_semitones) emit(pitch_shift(clip, s), "pitch" + format_number(s));
      for (std::size_t k = 0; k < spec.noise_kinds.size(); ++k) {
        std::mt19937_64 rng(derive_seed(spec.rng_seed, {i, k, 1}));
        std::uniform_real_distribution<double> snr(spec.snr_db_min, spec.snr_db_max);
        const double snr_db = spec.snr_db_min == spec.snr_db_max ? spec.snr_db_min : snr(rng);
        emit(add_noise(clip, spec.noise_kinds[k], snr_db, derive_seed(spec.rng_seed, {i, k, 2})),
             std::string("noise-") + to_string(spec.noise_kinds[k]));
      }
    } catch (const Error& e) {
      failures[i] = Error(e.code(), src.path + ": " + e.what());
    } catch (const std::exception& e) {
      failures[i] = Error(ErrorCode::IoFailure, src.path + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i]) throw *failures[i];
  }
  for (auto& rows : produced) {
    for (auto& r : rows) out.entries.push_back(std::move(r));
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const auto& a, const auto& b) { return a.path < b.path; });
  out.validate();
  return out;
}

}  // namespace xlid
