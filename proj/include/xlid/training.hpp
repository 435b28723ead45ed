#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlid/autodiff.hpp"
#include "xlid/checkpoint.hpp"
#include "xlid/dataset.hpp"
#include "xlid/model.hpp"

namespace xlid {

enum class Precision { f32, f64 };

const char* to_string(Precision p);
Precision parse_precision(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  /// Training crop length in seconds.
  double chunk_s = 3.0;
  ad::OptimizerSettings optimizer;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  /// When set, the best-validation checkpoint is written here as best.xlck.
  std::optional<std::filesystem::path> checkpoint_dir;
  FeatureConfig features;
  /// Evaluation center-crops utterances longer than this.
  std::optional<double> max_eval_s;
  std::optional<std::filesystem::path> feature_cache_dir;
  bool verbose = false;

  void validate() const;
};

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> labels);

  void add(int truth, int predicted);
  std::size_t count(int truth, int predicted) const;
  std::size_t n_classes() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t total() const;
  std::size_t correct() const;
  std::size_t row_total(int truth) const;
  double accuracy() const;

  std::string to_csv() const;
  /// Column-aligned rendering for terminals and logs.
  std::string to_text() const;
  nlohmann::json to_json() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::vector<std::string> labels_;
  std::vector<std::size_t> counts_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double wall_time_s = 0.0;
};

struct RunReport {
  std::vector<EpochMetrics> epochs;
  /// Confusion matrix of the selected (best) model on the evaluated set.
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t best_epoch = 0;
  double wall_time_s = 0.0;
  std::size_t skipped_train_clips = 0;
  std::size_t skipped_eval_clips = 0;
  std::map<std::string, std::string> selected_hparams;

  nlohmann::json to_json() const;
  /// Equality of every metric except wall-clock times.
  bool same_metrics(const RunReport& other) const;
};

struct TrainResult {
  RunReport report;
  TrainedModel model;  // parameters of the best-validation epoch
  std::optional<std::filesystem::path> checkpoint;
};

/// Mini-batch training with per-epoch validation; keeps the epoch with the
/// best validation accuracy (earlier epoch on ties). Throws DivergedLoss on a
/// non-finite loss after saving the last good parameters.
TrainResult train(const ModelConfig& cfg, const Manifest& train_set, const Manifest& val_set,
                  const TrainConfig& tc);

struct EvalOptions {
  Precision precision = Precision::f32;
  std::optional<double> max_eval_s;
  std::optional<std::filesystem::path> feature_cache_dir;
};

/// Whole-utterance evaluation of a trained model.
RunReport evaluate(const TrainedModel& model, const Manifest& test, const EvalOptions& opts = {});

/// Loads a checkpoint, checks that its architecture equals cfg
/// (CheckpointMismatch otherwise) and evaluates it.
RunReport evaluate(const ModelConfig& cfg, const std::filesystem::path& checkpoint,
                   const Manifest& test, const EvalOptions& opts = {});

/// Per-clip x-vectors.
std::vector<std::pair<std::string, std::vector<double>>> embed_manifest(
    const TrainedModel& model, const Manifest& manifest, const EvalOptions& opts = {});

struct GridSearchSpace {
  /// Index into ModelConfig::layers; must name a tdnn layer.
  std::size_t layer_index = 0;
  std::vector<int> context_sizes{1, 2, 3, 5, 7};
  std::vector<int> dilations{1, 2, 3};
  std::size_t epochs_per_cell = 3;

  void validate(const ModelConfig& base) const;
};

struct GridCell {
  int context_size = 0;
  int dilation = 0;
  std::size_t declaration_index = 0;
  bool valid = false;
  std::string status;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  double train_loss = 0.0;
  double wall_time_s = 0.0;
};

struct GridSearchResult {
  std::size_t layer_index = 0;
  std::vector<GridCell> cells;
  std::size_t best = 0;
  ModelConfig best_config;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// base with layer `layer_index` re-tapped for a context size and dilation.
ModelConfig with_layer_context(const ModelConfig& base, std::size_t layer_index, int context_size,
                               int dilation);

/// Highest validation accuracy among valid cells; ties go to the lower
/// dilation, then the lower context, then declaration order.
std::size_t select_best_cell(const std::vector<GridCell>& cells);

GridSearchResult grid_search(const GridSearchSpace& space, const ModelConfig& base,
                             const Manifest& train_set, const Manifest& val_set,
                             const TrainConfig& tc);

/// Searches each space in turn, freezing earlier winners into the base.
std::vector<GridSearchResult> sequential_grid_search(const std::vector<GridSearchSpace>& spaces,
                                                     const ModelConfig& base,
                                                     const Manifest& train_set,
                                                     const Manifest& val_set,
                                                     const TrainConfig& tc);

struct AblationVariant {
  std::string label;
  ModelConfig config;
  bool augmented = false;
};

/// The six architecture/data variants, in report order.
std::vector<AblationVariant> ablation_variants(int feature_dim, int n_classes);

struct AblationRow {
  std::string label;
  double accuracy = 0.0;
  RunReport report;
};

struct AblationData {
  Manifest train;
  Manifest val;
  Manifest augmented_train;
};

std::vector<AblationRow> run_ablation(const AblationData& data, const TrainConfig& tc);
std::string ablation_table(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace xlid
