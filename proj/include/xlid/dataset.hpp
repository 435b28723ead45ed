#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xlid/features.hpp"

namespace xlid {

struct ManifestEntry {
  std::string path;
  std::string language;
  std::optional<std::string> speaker_id;
  double duration_s = 0.0;

  bool operator==(const ManifestEntry&) const = default;
};

/// Corpus listing. `languages` is the declared closed label set, sorted; a
/// label's class index is its position in that list.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> languages;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  /// Class index of a language; throws UnknownLanguage.
  int label_of(const std::string& language) const;
  /// Checks unique paths, positive durations and declared labels.
  void validate() const;
  std::map<std::string, std::size_t> counts_by_language() const;
};

/// Builds a manifest whose declared label set is the given list, or the
/// sorted distinct labels of the entries when none is given.
Manifest make_manifest(std::vector<ManifestEntry> entries,
                       std::vector<std::string> languages = {});

/// CSV with header path,language,speaker_id,duration_s. An empty speaker_id
/// field means "absent".
Manifest load_manifest(const std::filesystem::path& path,
                       const std::vector<std::string>& declared_languages = {});
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Equal count per language (the minimum available), chosen uniformly
/// without replacement; sorted by (language, path).
Manifest balance_by_language(const Manifest& manifest, std::uint64_t seed);

struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  bool speaker_disjoint = true;
  /// Apply the fractions within each language's speakers (or entries)
  /// instead of globally.
  bool stratify_by_language = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Splits {
  Manifest train;
  Manifest val;
  Manifest test;
};

Splits split(const Manifest& manifest, const SplitSpec& spec);

/// Raw (pre-normalization) log-mel features per clip, memoized in memory and
/// optionally on disk as XLF1 files.
class FeatureStore {
 public:
  explicit FeatureStore(FeatureConfig cfg,
                        std::optional<std::filesystem::path> cache_dir = std::nullopt);

  const FeatureConfig& config() const { return cfg_; }

  /// Full-clip log-mel of the canonical-rate audio.
  const FeatureMatrix& raw(const std::string& path);

  /// Finalized features of a whole utterance; center-cropped to max_frames
  /// when longer.
  FeatureMatrix utterance(const std::string& path,
                          std::optional<std::size_t> max_frames = std::nullopt);

  /// Location of the disk cache file for a clip, if a cache dir is set.
  std::optional<std::filesystem::path> cache_path(const std::string& path) const;

 private:
  FeatureConfig cfg_;
  std::optional<std::filesystem::path> cache_dir_;
  std::map<std::string, FeatureMatrix> memo_;
};

/// Fingerprint of the settings that affect raw features.
std::string feature_config_tag(const FeatureConfig& cfg);

struct BatchConfig {
  double chunk_s = 3.0;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

/// N sequences of `frames` x `dim` finalized features, row-major.
struct Batch {
  std::size_t size = 0;
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> data;
  std::vector<int> labels;
  std::vector<std::size_t> entries;
  std::vector<std::size_t> offsets;
};

/// Epoch-wise stream of fixed-shape training batches with random crops.
class BatchStream {
 public:
  BatchStream(const Manifest& manifest, BatchConfig cfg, FeatureStore& store);

  /// Reshuffles for the given epoch and rewinds.
  void start_epoch(std::size_t epoch);
  std::optional<Batch> next();

  std::size_t chunk_frames() const { return chunk_frames_; }
  std::size_t usable() const { return usable_.size(); }
  std::size_t skipped() const { return skipped_; }

 private:
  const Manifest& manifest_;
  BatchConfig cfg_;
  FeatureStore& store_;
  std::size_t chunk_frames_ = 0;
  std::vector<std::size_t> usable_;
  std::size_t skipped_ = 0;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> offsets_;
  std::size_t cursor_ = 0;
};

}  // namespace xlid
