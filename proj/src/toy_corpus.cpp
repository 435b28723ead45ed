#include "xlid/toy_corpus.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <iomanip>

#include "xlid/errors.hpp"
#include "xlid/random.hpp"

namespace xlid {
namespace {

struct LanguageProfile {
  std::array<double, 3> resonances_hz;
  double modulation_hz;
};

LanguageProfile profile_for(int language, std::uint64_t seed) {
  static constexpr std::array<LanguageProfile, 3> kFixed{{
      {{400.0, 1400.0, 2800.0}, 3.0},
      {{700.0, 1900.0, 3400.0}, 5.5},
      {{550.0, 1100.0, 2300.0}, 8.0},
  }};
  if (language < static_cast<int>(kFixed.size())) return kFixed[static_cast<std::size_t>(language)];
  std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(language), 7}));
  std::uniform_real_distribution<double> f1(300.0, 900.0), f2(1000.0, 2200.0), f3(2300.0, 4000.0),
      am(2.0, 10.0);
  return {{f1(rng), f2(rng), f3(rng)}, am(rng)};
}

// RBJ band-pass biquad with 0 dB peak gain.
class BandPass {
 public:
  BandPass(double center_hz, double q, int rate) {
    const double w0 = 2.0 * std::numbers::pi * center_hz / rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }

  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

}  // namespace

Manifest generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.languages < 1 || spec.clips_per_language < 1 || spec.speakers_per_language < 1 ||
      !(spec.duration_s > 0.0) || spec.sample_rate <= 0) {
    throw Error(ErrorCode::InvalidArgument, "invalid toy corpus spec");
  }
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  std::vector<ManifestEntry> entries;
  for (int lang = 0; lang < spec.languages; ++lang) {
    const std::string language = "lang" + std::to_string(lang);
    const LanguageProfile profile = profile_for(lang, spec.seed);
    const auto dir = out_dir / language;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());

    for (int clip_no = 0; clip_no < spec.clips_per_language; ++clip_no) {
      const int speaker = clip_no % spec.speakers_per_language;
      std::mt19937_64 speaker_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(lang),
                                                          static_cast<std::uint64_t>(speaker), 1}));
      std::uniform_real_distribution<double> tract(0.93, 1.07), rate_jitter(0.9, 1.1), level(0.2, 0.6);
      const double scale = tract(speaker_rng);
      const double am_hz = profile.modulation_hz * rate_jitter(speaker_rng);
      const double gain = level(speaker_rng);

      std::mt19937_64 rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(lang),
                                                  static_cast<std::uint64_t>(clip_no), 2}));
      std::normal_distribution<double> normal;
      std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
      const double phi = phase(rng);
      std::array<BandPass, 3> bands{BandPass(profile.resonances_hz[0] * scale, 6.0, spec.sample_rate),
                                    BandPass(profile.resonances_hz[1] * scale, 6.0, spec.sample_rate),
                                    BandPass(profile.resonances_hz[2] * scale, 6.0, spec.sample_rate)};
      std::vector<double> x(n);
      double peak = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate;
        const double excitation = normal(rng);
        double voiced = bands[0](excitation) + 0.7 * bands[1](excitation) + 0.5 * bands[2](excitation);
        const double envelope = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * am_hz * t + phi));
        x[i] = voiced * envelope * envelope + 0.02 * normal(rng);
        peak = std::max(peak, std::abs(x[i]));
      }
      AudioClip clip;
      clip.sample_rate = spec.sample_rate;
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) clip.samples[i] = x[i] / peak * gain;

      std::ostringstream name;
      name << "spk" << std::setw(3) << std::setfill('0') << speaker << "_" << std::setw(4) << clip_no << ".wav";
      const auto path = dir / name.str();
      clip.source_id = path.string();
      write_wav(clip, path);
      entries.push_back({path.string(), language, language + "_spk" + std::to_string(speaker), clip.duration_s()});
    }
  }
  return make_manifest(std::move(entries));
}

}  // namespace xlid
