#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlid/autodiff.hpp"
#include "xlid/features.hpp"

namespace xlid {

enum class LayerKind { tdnn, stats_pool, segment_linear, softmax };

const char* to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

/// One row of an architecture table. For tdnn layers in_dim is
/// |taps| x (previous layer's per-frame width); for stats_pool in_dim is the
/// per-frame width and out_dim twice that.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::tdnn;
  std::vector<int> taps;
  int dilation = 1;
  int in_dim = 0;
  int out_dim = 0;

  /// taps scaled by dilation.
  std::vector<int> effective_offsets() const;
  /// max - min effective offset; 0 for non-tdnn layers.
  int span() const;

  bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
  std::vector<LayerSpec> layers;
  int n_classes = 0;
  int feature_dim = 0;

  /// Throws InvalidConfig unless dimensions chain, tdnn layers precede a
  /// single stats_pool, and the last layer is a softmax of width n_classes.
  void validate() const;
  std::size_t pool_index() const;
  /// Minimum input frames for a forward pass (pooling needs two frames).
  std::size_t min_frames() const;
  /// Per-frame width the first tdnn layer reads.
  int input_width() const { return feature_dim; }
  int embedding_dim() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Frame-level layer description used by the config builders.
struct FrameLayer {
  std::vector<int> taps;
  int dilation = 1;
  int width = 512;
};

/// Assembles frame layers, a stats pool, segment layers and the softmax,
/// computing every in_dim from taps and widths.
ModelConfig build_config(int feature_dim, int n_classes, const std::vector<FrameLayer>& frames,
                         const std::vector<int>& segment_widths = {512, 512});

/// Funnel-shaped dilated stack with 1x1 intermediate layers.
ModelConfig enhanced_config(int feature_dim, int n_classes);

/// Classic five-layer x-vector stack with a 3000-dimensional pooling output.
ModelConfig baseline_config(int feature_dim, int n_classes);

/// Symmetric taps for a context size: odd c -> {-k..k}, even c ->
/// {-k..k} without 0, with k = c / 2 (for even c) or (c - 1) / 2.
std::vector<int> context_taps(int context_size);

struct ReceptiveField {
  std::string name;
  /// Span of input frames feeding one output frame; for layers at or after
  /// pooling this is the stack's width and `whole_sequence` is set.
  std::size_t total_width = 1;
  std::size_t min_frames = 1;
  /// Exact set of input-frame offsets (relative to the first one) that feed
  /// an output frame. Dilated stacks can leave gaps.
  std::vector<int> offsets;
  bool whole_sequence = false;
};

std::vector<ReceptiveField> receptive_field(const ModelConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Named parameter values in double precision, independent of the
/// precision a network runs in.
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<ad::Shape> shapes;
  std::vector<std::vector<double>> values;

  std::size_t size() const { return names.size(); }
};

template <typename Real>
class Network {
 public:
  /// Xavier-uniform weights and zero biases drawn from seed.
  Network(ModelConfig cfg, std::uint64_t seed);
  Network(ModelConfig cfg, const ParameterSet& params);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ad::Value<Real>>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  struct Outputs {
    ad::Value<Real> frames;     // last frame-level layer output
    ad::Value<Real> embedding;  // first segment layer, pre-activation
    ad::Value<Real> logits;
  };

  /// Forward graph for [T, F] or [N, T, F] input.
  Outputs run(const ad::Tensor<Real>& input) const;
  /// Frame-level stack only; used by receptive-field analysis.
  ad::Value<Real> frame_stack(const ad::Tensor<Real>& input) const;

  /// Class posteriors for one utterance.
  std::vector<double> posteriors(const FeatureMatrix& feat) const;
  /// x-vector of one utterance.
  std::vector<double> embed(const FeatureMatrix& feat) const;

  ParameterSet snapshot() const;
  void restore(const ParameterSet& params);

 private:
  ad::Tensor<Real> to_input(const FeatureMatrix& feat) const;
  void check_length(std::size_t frames) const;

  ModelConfig cfg_;
  std::vector<std::string> names_;
  std::vector<ad::Value<Real>> params_;
};

/// Free-function forms of inference.
template <typename Real>
std::vector<double> forward(const Network<Real>& net, const FeatureMatrix& feat) {
  return net.posteriors(feat);
}

template <typename Real>
std::vector<double> extract_xvector(const Network<Real>& net, const FeatureMatrix& feat) {
  return net.embed(feat);
}

}  // namespace xlid
