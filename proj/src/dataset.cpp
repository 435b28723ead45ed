#include "xlid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "xlid/errors.hpp"
#include "xlid/random.hpp"

namespace xlid {
namespace {

// Splits one CSV line, honoring double-quoted fields with "" escapes.
std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

Manifest subset(const Manifest& m, const std::vector<std::size_t>& idx) {
  Manifest out;
  out.languages = m.languages;
  out.entries.reserve(idx.size());
  for (std::size_t i : idx) out.entries.push_back(m.entries[i]);
  return out;
}

// Partitions n shuffled items into three consecutive runs sized by the
// rounded fractions; the test run takes the remainder.
std::array<std::size_t, 2> cut_points(std::size_t n, const SplitSpec& spec) {
  std::size_t n_train = static_cast<std::size_t>(std::llround(spec.train_frac * n));
  std::size_t n_val = static_cast<std::size_t>(std::llround(spec.val_frac * n));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  return {n_train, n_train + n_val};
}

}  // namespace

int Manifest::label_of(const std::string& language) const {
  auto it = std::lower_bound(languages.begin(), languages.end(), language);
  if (it == languages.end() || *it != language) {
    throw Error(ErrorCode::UnknownLanguage, "'" + language + "' is not a declared language");
  }
  return static_cast<int>(it - languages.begin());
}

void Manifest::validate() const {
  if (!std::is_sorted(languages.begin(), languages.end()) ||
      std::adjacent_find(languages.begin(), languages.end()) != languages.end()) {
    throw Error(ErrorCode::InvalidArgument, "declared languages must be sorted and unique");
  }
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.path).second) throw Error(ErrorCode::DuplicatePath, e.path);
    if (!(e.duration_s > 0.0)) {
      throw Error(ErrorCode::ParseError, "non-positive duration for " + e.path);
    }
    label_of(e.language);
  }
}

std::map<std::string, std::size_t> Manifest::counts_by_language() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : languages) counts[l] = 0;
  for (const auto& e : entries) ++counts[e.language];
  return counts;
}

Manifest make_manifest(std::vector<ManifestEntry> entries, std::vector<std::string> languages) {
  Manifest m;
  if (languages.empty()) {
    for (const auto& e : entries) languages.push_back(e.language);
  }
  std::sort(languages.begin(), languages.end());
  languages.erase(std::unique(languages.begin(), languages.end()), languages.end());
  m.entries = std::move(entries);
  m.languages = std::move(languages);
  m.validate();
  return m;
}

Manifest load_manifest(const std::filesystem::path& path,
                       const std::vector<std::string>& declared_languages) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open manifest " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "line 1: missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const std::vector<std::string> expected{"path", "language", "speaker_id", "duration_s"};
  if (parse_csv_line(line, line_no) != expected) {
    throw Error(ErrorCode::ParseError, "line 1: header must be path,language,speaker_id,duration_s");
  }

  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto where = "line " + std::to_string(line_no) + ": ";
    auto fields = parse_csv_line(line, line_no);
    if (fields.size() != 4) throw Error(ErrorCode::ParseError, where + "expected 4 fields");
    ManifestEntry e;
    e.path = fields[0];
    e.language = fields[1];
    if (!fields[2].empty()) e.speaker_id = fields[2];
    if (e.path.empty() || e.language.empty()) {
      throw Error(ErrorCode::ParseError, where + "empty path or language");
    }
    char* end = nullptr;
    e.duration_s = std::strtod(fields[3].c_str(), &end);
    if (fields[3].empty() || *end != '\0' || !std::isfinite(e.duration_s) || e.duration_s <= 0.0) {
      throw Error(ErrorCode::ParseError, where + "invalid duration '" + fields[3] + "'");
    }
    if (!seen.insert(e.path).second) throw Error(ErrorCode::DuplicatePath, where + e.path);
    entries.push_back(std::move(e));
  }
  return make_manifest(std::move(entries), declared_languages);
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write manifest " + path.string());
  out << "path,language,speaker_id,duration_s\n";
  out << std::setprecision(17);
  for (const auto& e : manifest.entries) {
    out << csv_field(e.path) << ',' << csv_field(e.language) << ','
        << csv_field(e.speaker_id.value_or("")) << ',' << e.duration_s << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

Manifest balance_by_language(const Manifest& manifest, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_lang;
  for (const auto& l : manifest.languages) by_lang[l];
  for (std::size_t i = 0; i < manifest.size(); ++i) by_lang[manifest.entries[i].language].push_back(i);

  std::size_t quota = manifest.size();
  for (const auto& [lang, idx] : by_lang) {
    if (idx.empty()) throw Error(ErrorCode::EmptyLanguage, "no entries for '" + lang + "'");
    quota = std::min(quota, idx.size());
  }

  std::vector<std::size_t> chosen;
  std::uint64_t lang_no = 0;
  for (auto& [lang, idx] : by_lang) {
    std::mt19937_64 rng(derive_seed(seed, {lang_no++}));
    // Partial Fisher-Yates: the first `quota` slots are a uniform sample.
    for (std::size_t i = 0; i < quota; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota));
  }
  Manifest out = subset(manifest, chosen);
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    return std::tie(a.language, a.path) < std::tie(b.language, b.path);
  });
  return out;
}

void SplitSpec::validate() const {
  for (double f : {train_frac, val_frac, test_frac}) {
    if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::InvalidArgument, "split fractions must lie in (0, 1)");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split fractions must sum to 1");
  }
}

Splits split(const Manifest& manifest, const SplitSpec& spec) {
  spec.validate();
  // 0 = train, 1 = val, 2 = test, per entry.
  std::vector<int> assign(manifest.size(), 0);

  // Groups are either every entry or each language's entries.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    groups[spec.stratify_by_language ? manifest.entries[i].language : std::string()].push_back(i);
  }

  for (const auto& [group, idx] : groups) {
    const std::uint64_t gseed = derive_seed(spec.seed, {fnv1a(group.data(), group.size())});
    if (spec.speaker_disjoint) {
      std::vector<std::string> speakers;
      for (std::size_t i : idx) {
        const auto& e = manifest.entries[i];
        if (!e.speaker_id) throw Error(ErrorCode::MissingSpeakerId, e.path);
        speakers.push_back(*e.speaker_id);
      }
      std::sort(speakers.begin(), speakers.end());
      speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
      // Order speakers by a seeded hash so assignment does not depend on
      // manifest order.
      std::vector<std::pair<std::uint64_t, std::string>> keyed;
      for (auto& s : speakers) keyed.emplace_back(derive_seed(gseed, {fnv1a(s.data(), s.size())}), s);
      std::sort(keyed.begin(), keyed.end());
      const auto cuts = cut_points(keyed.size(), spec);
      std::map<std::string, int> speaker_split;
      for (std::size_t k = 0; k < keyed.size(); ++k) {
        speaker_split[keyed[k].second] = k < cuts[0] ? 0 : (k < cuts[1] ? 1 : 2);
      }
      for (std::size_t i : idx) assign[i] = speaker_split.at(*manifest.entries[i].speaker_id);
    } else {
      std::vector<std::size_t> order = idx;
      std::mt19937_64 rng(gseed);
      std::shuffle(order.begin(), order.end(), rng);
      const auto cuts = cut_points(order.size(), spec);
      for (std::size_t k = 0; k < order.size(); ++k) {
        assign[order[k]] = k < cuts[0] ? 0 : (k < cuts[1] ? 1 : 2);
      }
    }
  }

  std::array<std::vector<std::size_t>, 3> parts;
  for (std::size_t i = 0; i < manifest.size(); ++i) parts[static_cast<std::size_t>(assign[i])].push_back(i);
  return {subset(manifest, parts[0]), subset(manifest, parts[1]), subset(manifest, parts[2])};
}

std::string feature_config_tag(const FeatureConfig& cfg) {
  std::ostringstream os;
  os << "mel" << cfg.n_mels << "_len" << cfg.frame_len_ms << "_hop" << cfg.frame_shift_ms
     << "_pre" << cfg.preemphasis << "_fft" << cfg.fft_size;
  return os.str();
}

FeatureStore::FeatureStore(FeatureConfig cfg, std::optional<std::filesystem::path> cache_dir)
    : cfg_(std::move(cfg)), cache_dir_(std::move(cache_dir)) {
  cfg_.validate(kCanonicalSampleRate);
}

std::optional<std::filesystem::path> FeatureStore::cache_path(const std::string& path) const {
  if (!cache_dir_) return std::nullopt;
  const std::string tag = feature_config_tag(cfg_);
  std::ostringstream name;
  name << std::filesystem::path(path).stem().string() << '_' << std::hex << std::setw(16)
       << std::setfill('0') << fnv1a(path.data(), path.size()) << '_'
       << (fnv1a(tag.data(), tag.size()) & 0xFFFFFFFFULL) << ".xlf";
  return *cache_dir_ / name.str();
}

const FeatureMatrix& FeatureStore::raw(const std::string& path) {
  if (auto it = memo_.find(path); it != memo_.end()) return it->second;
  FeatureMatrix feat;
  auto cached = cache_path(path);
  if (cached && std::filesystem::exists(*cached)) {
    feat = read_feature_cache(*cached);
  } else {
    FeatureConfig raw_cfg = cfg_;
    raw_cfg.n_mfcc.reset();
    AudioClip clip = load_canonical(path);
    feat = log_mel_spectrogram(clip, raw_cfg);
    if (cached) {
      std::filesystem::create_directories(cached->parent_path());
      write_feature_cache(feat, *cached);
    }
  }
  return memo_.emplace(path, std::move(feat)).first->second;
}

FeatureMatrix FeatureStore::utterance(const std::string& path, std::optional<std::size_t> max_frames) {
  const FeatureMatrix& full = raw(path);
  if (max_frames && full.frames() > *max_frames) {
    const std::size_t begin = (full.frames() - *max_frames) / 2;
    return finalize_features(crop_frames(full, begin, *max_frames), cfg_);
  }
  return finalize_features(full, cfg_);
}

BatchStream::BatchStream(const Manifest& manifest, BatchConfig cfg, FeatureStore& store)
    : manifest_(manifest), cfg_(cfg), store_(store) {
  if (cfg_.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be positive");
  if (!(cfg_.chunk_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "chunk_s must be positive");
  const auto chunk_samples =
      static_cast<std::size_t>(std::llround(cfg_.chunk_s * kCanonicalSampleRate));
  chunk_frames_ = frame_count(chunk_samples, kCanonicalSampleRate, store_.config());
  if (chunk_frames_ == 0) throw Error(ErrorCode::InvalidArgument, "chunk shorter than one frame");
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    if (store_.raw(manifest_.entries[i].path).frames() >= chunk_frames_) {
      usable_.push_back(i);
    } else {
      ++skipped_;
    }
  }
  if (usable_.empty()) {
    throw Error(ErrorCode::NoUsableClips,
                "no clip is at least " + std::to_string(cfg_.chunk_s) + " s long");
  }
  start_epoch(0);
}

void BatchStream::start_epoch(std::size_t epoch) {
  std::mt19937_64 rng(derive_seed(cfg_.seed, {epoch}));
  order_ = usable_;
  std::shuffle(order_.begin(), order_.end(), rng);
  offsets_.resize(order_.size());
  for (std::size_t k = 0; k < order_.size(); ++k) {
    const std::size_t frames = store_.raw(manifest_.entries[order_[k]].path).frames();
    std::uniform_int_distribution<std::size_t> pick(0, frames - chunk_frames_);
    offsets_[k] = pick(rng);
  }
  cursor_ = 0;
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t n = std::min(cfg_.batch_size, order_.size() - cursor_);
  Batch b;
  b.size = n;
  b.frames = chunk_frames_;
  b.dim = static_cast<std::size_t>(store_.config().feature_dim());
  b.data.reserve(n * b.frames * b.dim);
  for (std::size_t k = cursor_; k < cursor_ + n; ++k) {
    const auto& entry = manifest_.entries[order_[k]];
    FeatureMatrix crop =
        finalize_features(crop_frames(store_.raw(entry.path), offsets_[k], chunk_frames_), store_.config());
    b.data.insert(b.data.end(), crop.values.data.begin(), crop.values.data.end());
    b.labels.push_back(manifest_.label_of(entry.language));
    b.entries.push_back(order_[k]);
    b.offsets.push_back(offsets_[k]);
  }
  cursor_ += n;
  return b;
}

}  // namespace xlid
