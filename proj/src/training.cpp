#include "xlid/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "xlid/errors.hpp"
#include "xlid/random.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace xlid {
namespace {

using Clock = std::chrono::steady_clock;

// Subnormal arithmetic is very slow on x86 and shows up once the loss gets
// near zero; flush it for the duration of a run.
class DenormalGuard {
 public:
#if defined(__SSE__)
  // MXCSR flush-to-zero and denormals-are-zero bits.
  static constexpr unsigned kFtzDaz = 0x8040;

  DenormalGuard() : saved_(_mm_getcsr()) { set_all(saved_ | kFtzDaz); }
  ~DenormalGuard() { set_all(saved_); }

 private:
  // MXCSR is per thread, so the OpenMP workers need it too.
  static void set_all(unsigned csr) {
#pragma omp parallel
    _mm_setcsr(csr);
    _mm_setcsr(csr);
  }

  unsigned saved_;
#endif
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::optional<std::size_t> eval_frame_limit(const std::optional<double>& max_eval_s,
                                            const FeatureConfig& features) {
  if (!max_eval_s) return std::nullopt;
  const auto samples = static_cast<std::size_t>(std::llround(*max_eval_s * kCanonicalSampleRate));
  return frame_count(samples, kCanonicalSampleRate, features);
}

template <typename Real>
ad::Tensor<Real> batch_tensor(const Batch& b) {
  ad::Tensor<Real> t({b.size, b.frames, b.dim});
  std::transform(b.data.begin(), b.data.end(), t.values().begin(),
                 [](double v) { return static_cast<Real>(v); });
  return t;
}

template <typename Real>
std::size_t count_correct(const ad::Tensor<Real>& logits, const std::vector<int>& labels) {
  const std::size_t l = logits.shape().back();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const Real* row = logits.data() + r * l;
    const auto pred = static_cast<int>(std::max_element(row, row + l) - row);
    correct += pred == labels[r] ? 1 : 0;
  }
  return correct;
}

struct EvalOutcome {
  ConfusionMatrix confusion;
  double loss = 0.0;
  std::size_t skipped = 0;
};

// Whole-utterance inference over a manifest; utterances shorter than the
// model's minimum are skipped and counted.
template <typename Real>
EvalOutcome evaluate_network(const Network<Real>& net, const Manifest& manifest,
                             const std::vector<std::string>& languages, FeatureStore& store,
                             std::optional<std::size_t> max_frames) {
  EvalOutcome out{ConfusionMatrix(languages), 0.0, 0};
  Manifest label_space;
  label_space.languages = languages;
  double loss_sum = 0.0;
  ad::NoGradGuard no_grad;
  for (const auto& e : manifest.entries) {
    const int truth = label_space.label_of(e.language);
    FeatureMatrix feat = store.utterance(e.path, max_frames);
    if (feat.frames() < net.config().min_frames()) {
      ++out.skipped;
      continue;
    }
    ad::Tensor<Real> x({feat.frames(), feat.dim()});
    std::transform(feat.values.data.begin(), feat.values.data.end(), x.values().begin(),
                   [](double v) { return static_cast<Real>(v); });
    const auto logits = net.run(x).logits;
    const std::vector<int> label{truth};
    loss_sum += ad::softmax_cross_entropy(logits, std::span<const int>(label)).data()[0];
    const auto& z = logits.data();
    const auto pred = static_cast<int>(std::max_element(z.data(), z.data() + z.size()) - z.data());
    out.confusion.add(truth, pred);
  }
  if (out.confusion.total() > 0) out.loss = loss_sum / static_cast<double>(out.confusion.total());
  return out;
}

template <typename Real>
TrainResult train_impl(const ModelConfig& cfg, const Manifest& train_set, const Manifest& val_set,
                       const TrainConfig& tc) {
  const DenormalGuard ftz;
  const auto start = Clock::now();
  FeatureStore store(tc.features, tc.feature_cache_dir);
  BatchStream stream(train_set, {tc.chunk_s, tc.batch_size, derive_seed(tc.seed, {2})}, store);
  if (stream.chunk_frames() < cfg.min_frames()) {
    throw Error(ErrorCode::SequenceTooShort, "training chunks have " + std::to_string(stream.chunk_frames()) +
                                                 " frames; the model needs " + std::to_string(cfg.min_frames()));
  }
  const auto max_frames = eval_frame_limit(tc.max_eval_s, tc.features);

  Network<Real> net(cfg, derive_seed(tc.seed, {1}));
  ad::Optimizer<Real> opt(tc.optimizer);

  TrainResult result;
  result.model.model = cfg;
  result.model.features = tc.features;
  result.model.languages = train_set.languages;
  result.report.skipped_train_clips = stream.skipped();

  auto save = [&](const ParameterSet& params, const std::string& file) -> std::optional<std::filesystem::path> {
    if (!tc.checkpoint_dir) return std::nullopt;
    std::filesystem::create_directories(*tc.checkpoint_dir);
    TrainedModel m = result.model;
    m.params = params;
    const auto path = *tc.checkpoint_dir / file;
    save_checkpoint(m, path);
    return path;
  };

  bool have_best = false;
  double best_acc = -1.0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const ParameterSet last_good = net.snapshot();
    stream.start_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    try {
      while (auto batch = stream.next()) {
        const auto out = net.run(batch_tensor<Real>(*batch));
        const auto loss = ad::softmax_cross_entropy(out.logits, std::span<const int>(batch->labels));
        const double l = loss.data()[0];
        if (!std::isfinite(l)) throw Error(ErrorCode::NonFinite, "loss is " + std::to_string(l));
        ad::backward(loss);
        opt.step(std::span<ad::Value<Real>>(net.parameters()));
        loss_sum += l * static_cast<double>(batch->size);
        seen += batch->size;
        correct += count_correct(out.logits.data(), batch->labels);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFinite) throw;
      if (have_best) {
        result.checkpoint = save(result.model.params, "best.xlck");
      } else {
        result.checkpoint = save(last_good, "last_good.xlck");
      }
      throw Error(ErrorCode::DivergedLoss, "epoch " + std::to_string(epoch) + ": " + e.what());
    }

    const EvalOutcome val = evaluate_network(net, val_set, train_set.languages, store, max_frames);
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(seen);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    m.val_loss = val.loss;
    m.val_accuracy = val.confusion.accuracy();
    m.wall_time_s = seconds_since(epoch_start);
    result.report.epochs.push_back(m);

    if (m.val_accuracy > best_acc) {
      best_acc = m.val_accuracy;
      have_best = true;
      result.model.params = net.snapshot();
      result.report.best_epoch = epoch;
      result.report.confusion = val.confusion;
      result.report.accuracy = m.val_accuracy;
      result.report.loss = m.val_loss;
      result.report.skipped_eval_clips = val.skipped;
      result.checkpoint = save(result.model.params, "best.xlck");
    }
    if (tc.verbose) {
      std::cerr << "epoch " << epoch << "/" << tc.epochs << std::fixed << std::setprecision(4)
                << "  train_loss " << m.train_loss << "  train_acc " << m.train_accuracy
                << "  val_loss " << m.val_loss << "  val_acc " << m.val_accuracy << std::setprecision(1)
                << "  (" << m.wall_time_s << " s)" << std::defaultfloat << std::endl;
    }
  }
  result.report.wall_time_s = seconds_since(start);
  return result;
}

template <typename Real>
RunReport evaluate_impl(const TrainedModel& model, const Manifest& test, const EvalOptions& opts) {
  const DenormalGuard ftz;
  const auto start = Clock::now();
  Network<Real> net(model.model, model.params);
  FeatureStore store(model.features, opts.feature_cache_dir);
  const EvalOutcome out =
      evaluate_network(net, test, model.languages, store, eval_frame_limit(opts.max_eval_s, model.features));
  RunReport r;
  r.confusion = out.confusion;
  r.accuracy = out.confusion.accuracy();
  r.loss = out.loss;
  r.skipped_eval_clips = out.skipped;
  r.wall_time_s = seconds_since(start);
  return r;
}

template <typename Real>
std::vector<std::pair<std::string, std::vector<double>>> embed_impl(const TrainedModel& model,
                                                                    const Manifest& manifest,
                                                                    const EvalOptions& opts) {
  Network<Real> net(model.model, model.params);
  FeatureStore store(model.features, opts.feature_cache_dir);
  const auto limit = eval_frame_limit(opts.max_eval_s, model.features);
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (const auto& e : manifest.entries) out.emplace_back(e.path, net.embed(store.utterance(e.path, limit)));
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

const char* to_string(Precision p) { return p == Precision::f32 ? "32" : "64"; }

Precision parse_precision(const std::string& name) {
  if (name == "32" || name == "f32" || name == "float") return Precision::f32;
  if (name == "64" || name == "f64" || name == "double") return Precision::f64;
  throw Error(ErrorCode::InvalidArgument, "precision must be 32 or 64, got '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(chunk_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "chunk_s must be positive");
  if (max_eval_s && !(*max_eval_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_eval_s must be positive");
  features.validate(kCanonicalSampleRate);
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels)
    : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

void ConfusionMatrix::add(int truth, int predicted) {
  const auto n = static_cast<int>(n_classes());
  if (truth < 0 || truth >= n || predicted < 0 || predicted >= n) {
    throw Error(ErrorCode::LabelOutOfRange, "confusion entry (" + std::to_string(truth) + ", " +
                                                std::to_string(predicted) + ")");
  }
  ++counts_[static_cast<std::size_t>(truth) * n_classes() + static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::count(int truth, int predicted) const {
  return counts_.at(static_cast<std::size_t>(truth) * n_classes() + static_cast<std::size_t>(predicted));
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::size_t ConfusionMatrix::correct() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < n_classes(); ++i) s += counts_[i * n_classes() + i];
  return s;
}

std::size_t ConfusionMatrix::row_total(int truth) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < n_classes(); ++j) s += count(truth, static_cast<int>(j));
  return s;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t t = total();
  return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true\\predicted";
  for (const auto& l : labels_) os << ',' << l;
  os << '\n';
  for (std::size_t i = 0; i < n_classes(); ++i) {
    os << labels_[i];
    for (std::size_t j = 0; j < n_classes(); ++j) os << ',' << counts_[i * n_classes() + j];
    os << '\n';
  }
  return os.str();
}

std::string ConfusionMatrix::to_text() const {
  std::size_t width = 4;
  for (const auto& l : labels_) width = std::max(width, l.size());
  for (auto c : counts_) width = std::max(width, std::to_string(c).size());
  std::ostringstream os;
  os << std::setw(static_cast<int>(width)) << "" << " |";
  for (const auto& l : labels_) os << ' ' << std::setw(static_cast<int>(width)) << l;
  os << '\n' << std::string(width + 2 + (width + 1) * n_classes(), '-') << '\n';
  for (std::size_t i = 0; i < n_classes(); ++i) {
    os << std::setw(static_cast<int>(width)) << labels_[i] << " |";
    for (std::size_t j = 0; j < n_classes(); ++j) {
      os << ' ' << std::setw(static_cast<int>(width)) << counts_[i * n_classes() + j];
    }
    os << '\n';
  }
  os << "accuracy " << fixed(accuracy()) << " (" << correct() << "/" << total() << ")\n";
  return os.str();
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n_classes(); ++i) {
    rows.push_back(std::vector<std::size_t>(counts_.begin() + static_cast<std::ptrdiff_t>(i * n_classes()),
                                            counts_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_classes())));
  }
  return {{"labels", labels_}, {"counts", rows}};
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch},
                  {"train_loss", e.train_loss},
                  {"train_accuracy", e.train_accuracy},
                  {"val_loss", e.val_loss},
                  {"val_accuracy", e.val_accuracy},
                  {"wall_time_s", e.wall_time_s}});
  }
  return {{"epochs", ep},
          {"confusion_matrix", confusion.to_json()},
          {"accuracy", accuracy},
          {"loss", loss},
          {"best_epoch", best_epoch},
          {"wall_time_s", wall_time_s},
          {"skipped_train_clips", skipped_train_clips},
          {"skipped_eval_clips", skipped_eval_clips},
          {"selected_hparams", selected_hparams}};
}

bool RunReport::same_metrics(const RunReport& o) const {
  if (epochs.size() != o.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = o.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.train_accuracy != b.train_accuracy ||
        a.val_loss != b.val_loss || a.val_accuracy != b.val_accuracy) {
      return false;
    }
  }
  return confusion == o.confusion && accuracy == o.accuracy && loss == o.loss && best_epoch == o.best_epoch &&
         skipped_train_clips == o.skipped_train_clips && skipped_eval_clips == o.skipped_eval_clips &&
         selected_hparams == o.selected_hparams;
}

TrainResult train(const ModelConfig& cfg, const Manifest& train_set, const Manifest& val_set,
                  const TrainConfig& tc) {
  tc.validate();
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw Error(ErrorCode::NoUsableClips, "training and validation manifests must be nonempty");
  }
  if (cfg.n_classes != static_cast<int>(train_set.languages.size())) {
    throw Error(ErrorCode::DimensionMismatch, "model has " + std::to_string(cfg.n_classes) + " classes, data has " +
                                                  std::to_string(train_set.languages.size()) + " languages");
  }
  if (cfg.feature_dim != tc.features.feature_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "model expects F = " + std::to_string(cfg.feature_dim) +
                                                  ", features give " + std::to_string(tc.features.feature_dim()));
  }
  return tc.precision == Precision::f32 ? train_impl<float>(cfg, train_set, val_set, tc)
                                        : train_impl<double>(cfg, train_set, val_set, tc);
}

RunReport evaluate(const TrainedModel& model, const Manifest& test, const EvalOptions& opts) {
  return opts.precision == Precision::f32 ? evaluate_impl<float>(model, test, opts)
                                          : evaluate_impl<double>(model, test, opts);
}

RunReport evaluate(const ModelConfig& cfg, const std::filesystem::path& checkpoint, const Manifest& test,
                   const EvalOptions& opts) {
  const TrainedModel model = load_checkpoint(checkpoint);
  if (!(model.model == cfg)) {
    throw Error(ErrorCode::CheckpointMismatch, checkpoint.string() + " holds a different architecture");
  }
  return evaluate(model, test, opts);
}

std::vector<std::pair<std::string, std::vector<double>>> embed_manifest(const TrainedModel& model,
                                                                        const Manifest& manifest,
                                                                        const EvalOptions& opts) {
  return opts.precision == Precision::f32 ? embed_impl<float>(model, manifest, opts)
                                          : embed_impl<double>(model, manifest, opts);
}

void GridSearchSpace::validate(const ModelConfig& base) const {
  if (context_sizes.empty() || dilations.empty()) {
    throw Error(ErrorCode::InvalidArgument, "grid search needs at least one context size and dilation");
  }
  if (layer_index >= base.layers.size() || base.layers[layer_index].kind != LayerKind::tdnn) {
    throw Error(ErrorCode::InvalidArgument, "layer index " + std::to_string(layer_index) + " is not a tdnn layer");
  }
  for (int c : context_sizes) {
    if (c < 1) throw Error(ErrorCode::InvalidArgument, "context sizes must be >= 1");
  }
  for (int d : dilations) {
    if (d < 1) throw Error(ErrorCode::InvalidArgument, "dilations must be >= 1");
  }
  if (epochs_per_cell < 1) throw Error(ErrorCode::InvalidArgument, "epochs_per_cell must be >= 1");
}

ModelConfig with_layer_context(const ModelConfig& base, std::size_t layer_index, int context_size, int dilation) {
  ModelConfig cfg = base;
  auto& layer = cfg.layers.at(layer_index);
  if (layer.kind != LayerKind::tdnn) throw Error(ErrorCode::InvalidArgument, layer.name + " is not a tdnn layer");
  const int prev_width = layer_index == 0 ? cfg.feature_dim : cfg.layers[layer_index - 1].out_dim;
  layer.taps = context_taps(context_size);
  layer.dilation = dilation;
  layer.in_dim = static_cast<int>(layer.taps.size()) * prev_width;
  cfg.validate();
  return cfg;
}

std::size_t select_best_cell(const std::vector<GridCell>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (!c.valid) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = cells[*best];
    const auto key = [](const GridCell& g) {
      return std::make_tuple(-g.val_accuracy, g.dilation, g.context_size, g.declaration_index);
    };
    if (key(c) < key(b)) best = i;
  }
  if (!best) throw Error(ErrorCode::InvalidCell, "no valid grid cell");
  return *best;
}

GridSearchResult grid_search(const GridSearchSpace& space, const ModelConfig& base, const Manifest& train_set,
                             const Manifest& val_set, const TrainConfig& tc) {
  space.validate(base);
  tc.validate();
  TrainConfig cell_tc = tc;
  cell_tc.epochs = space.epochs_per_cell;
  cell_tc.checkpoint_dir.reset();
  const auto chunk_samples = static_cast<std::size_t>(std::llround(tc.chunk_s * kCanonicalSampleRate));
  const std::size_t chunk_frames = frame_count(chunk_samples, kCanonicalSampleRate, tc.features);

  GridSearchResult result;
  result.layer_index = space.layer_index;
  for (int context : space.context_sizes) {
    for (int dilation : space.dilations) {
      GridCell cell;
      cell.context_size = context;
      cell.dilation = dilation;
      cell.declaration_index = result.cells.size();
      const ModelConfig cfg = with_layer_context(base, space.layer_index, context, dilation);
      if (cfg.min_frames() > chunk_frames) {
        cell.status = std::string(to_string(ErrorCode::InvalidCell)) + ": receptive field needs " +
                      std::to_string(cfg.min_frames()) + " frames, chunks have " + std::to_string(chunk_frames);
      } else {
        const TrainResult r = train(cfg, train_set, val_set, cell_tc);
        cell.valid = true;
        cell.status = "ok";
        cell.val_accuracy = r.report.accuracy;
        cell.val_loss = r.report.loss;
        cell.train_loss = r.report.epochs.back().train_loss;
        cell.wall_time_s = r.report.wall_time_s;
      }
      if (tc.verbose) {
        std::cerr << "cell context " << context << " dilation " << dilation << ": " << cell.status
                  << (cell.valid ? " val_acc " + fixed(cell.val_accuracy) : std::string()) << std::endl;
      }
      result.cells.push_back(std::move(cell));
    }
  }
  result.best = select_best_cell(result.cells);
  const auto& best = result.cells[result.best];
  result.best_config = with_layer_context(base, space.layer_index, best.context_size, best.dilation);
  return result;
}

std::vector<GridSearchResult> sequential_grid_search(const std::vector<GridSearchSpace>& spaces,
                                                     const ModelConfig& base, const Manifest& train_set,
                                                     const Manifest& val_set, const TrainConfig& tc) {
  std::vector<GridSearchResult> results;
  ModelConfig current = base;
  for (const auto& space : spaces) {
    results.push_back(grid_search(space, current, train_set, val_set, tc));
    current = results.back().best_config;
  }
  return results;
}

nlohmann::json GridSearchResult::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) {
    rows.push_back({{"context_size", c.context_size},
                    {"dilation", c.dilation},
                    {"valid", c.valid},
                    {"status", c.status},
                    {"val_accuracy", c.val_accuracy},
                    {"val_loss", c.val_loss},
                    {"train_loss", c.train_loss},
                    {"wall_time_s", c.wall_time_s}});
  }
  const auto& b = cells.at(best);
  return {{"layer_index", layer_index},
          {"cells", rows},
          {"best", {{"context_size", b.context_size}, {"dilation", b.dilation}, {"val_accuracy", b.val_accuracy}}},
          {"best_config", xlid::to_json(best_config)}};
}

std::string GridSearchResult::to_table() const {
  std::ostringstream os;
  os << "context  dilation  val_acc  val_loss  train_loss  status\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    os << std::setw(7) << c.context_size << "  " << std::setw(8) << c.dilation << "  " << std::setw(7)
       << fixed(c.val_accuracy) << "  " << std::setw(8) << fixed(c.val_loss) << "  " << std::setw(10)
       << fixed(c.train_loss) << "  " << c.status << (i == best ? "  <- best" : "") << '\n';
  }
  return os.str();
}

std::vector<AblationVariant> ablation_variants(int feature_dim, int n_classes) {
  const std::vector<FrameLayer> grid_taps{
      {context_taps(3), 2, 512}, {context_taps(5), 2, 512}, {context_taps(2), 1, 512}, {{0}, 1, 512}, {{0}, 1, 1500}};
  const std::vector<FrameLayer> intermediate{{{-2, -1, 0, 1, 2}, 1, 512}, {{0}, 1, 512}, {{-2, 0, 2}, 1, 512},
                                             {{0}, 1, 512},               {{-3, 0, 3}, 1, 512}, {{0}, 1, 512},
                                             {{0}, 1, 1500}};
  const std::vector<FrameLayer> funnel{
      {{-2, -1, 0, 1, 2}, 1, 1280}, {{-2, 0, 2}, 1, 1024}, {{-3, 0, 3}, 1, 768}, {{0}, 1, 512}, {{0}, 1, 256}};
  return {
      {"Baseline", baseline_config(feature_dim, n_classes), false},
      {"Grid Search", build_config(feature_dim, n_classes, grid_taps), false},
      {"Intermediate Layers", build_config(feature_dim, n_classes, intermediate), false},
      {"Funnel Structure", build_config(feature_dim, n_classes, funnel), false},
      {"Integrated Approach", enhanced_config(feature_dim, n_classes), false},
      {"Final Model", enhanced_config(feature_dim, n_classes), true},
  };
}

std::vector<AblationRow> run_ablation(const AblationData& data, const TrainConfig& tc) {
  tc.validate();
  if (data.augmented_train.empty()) {
    throw Error(ErrorCode::NoUsableClips, "the final ablation row needs an augmented training manifest");
  }
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_variants(tc.features.feature_dim(), static_cast<int>(data.train.languages.size()))) {
    if (tc.verbose) std::cerr << "ablation: " << v.label << std::endl;
    TrainConfig row_tc = tc;
    if (row_tc.checkpoint_dir) row_tc.checkpoint_dir = *row_tc.checkpoint_dir / std::to_string(rows.size() + 1);
    const TrainResult r = train(v.config, v.augmented ? data.augmented_train : data.train, data.val, row_tc);
    rows.push_back({v.label, r.report.accuracy, r.report});
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Model" << "  Accuracy\n";
  for (const auto& r : rows) os << std::setw(static_cast<int>(width)) << r.label << "  " << fixed(r.accuracy) << '\n';
  return os.str();
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back({{"model", r.label}, {"accuracy", r.accuracy}, {"report", r.report.to_json()}});
  return out;
}

}  // namespace xlid
