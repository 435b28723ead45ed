#pragma once

#include <cstdint>
#include <filesystem>

#include "xlid/dataset.hpp"

namespace xlid {

/// Synthetic "languages": band-limited noise shaped by a language-specific
/// set of resonances and amplitude-modulated at a language-specific rate,
/// over a faint broadband floor. Each synthetic speaker scales the
/// resonances, jitters the modulation rate and picks a gain.
struct ToyCorpusSpec {
  int languages = 3;
  int clips_per_language = 200;
  int speakers_per_language = 20;
  double duration_s = 3.0;
  int sample_rate = kCanonicalSampleRate;
  std::uint64_t seed = 0;
};

/// Writes one WAV per clip under out_dir/<language>/ and returns their
/// manifest. Output depends only on the ToyCorpusSpec fields.
Manifest generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_dir);

}  // namespace xlid
