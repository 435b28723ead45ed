#include "xlid/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "xlid/errors.hpp"

namespace xlid {
namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

bool has_weights(LayerKind kind) { return kind != LayerKind::stats_pool; }

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::tdnn: return "tdnn";
    case LayerKind::stats_pool: return "stats_pool";
    case LayerKind::segment_linear: return "segment_linear";
    case LayerKind::softmax: return "softmax";
  }
  return "tdnn";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (LayerKind k : {LayerKind::tdnn, LayerKind::stats_pool, LayerKind::segment_linear, LayerKind::softmax}) {
    if (name == to_string(k)) return k;
  }
  invalid("unknown layer kind '" + name + "'");
}

std::vector<int> LayerSpec::effective_offsets() const {
  std::vector<int> out;
  out.reserve(taps.size());
  for (int t : taps) out.push_back(t * dilation);
  return out;
}

int LayerSpec::span() const {
  if (kind != LayerKind::tdnn || taps.empty()) return 0;
  return (taps.back() - taps.front()) * dilation;
}

void ModelConfig::validate() const {
  if (feature_dim < 1) invalid("feature_dim must be >= 1");
  if (n_classes < 1) invalid("n_classes must be >= 1");
  if (layers.empty()) invalid("no layers");

  enum { frames, pooled, done } phase = frames;
  int width = feature_dim;
  std::size_t tdnn_count = 0, segment_count = 0;
  std::set<std::string> names;
  for (const auto& l : layers) {
    const std::string where = "layer '" + l.name + "': ";
    if (l.name.empty() || !names.insert(l.name).second) invalid(where + "names must be unique and nonempty");
    if (phase == done) invalid(where + "softmax must be the last layer");
    if (l.out_dim < 1) invalid(where + "out_dim must be >= 1");
    switch (l.kind) {
      case LayerKind::tdnn: {
        if (phase != frames) invalid(where + "tdnn layers must precede pooling");
        if (l.taps.empty()) invalid(where + "no taps");
        for (std::size_t i = 1; i < l.taps.size(); ++i) {
          if (l.taps[i] <= l.taps[i - 1]) invalid(where + "taps must be sorted and unique");
        }
        if (l.dilation < 1) invalid(where + "dilation must be >= 1");
        const long expected = static_cast<long>(l.taps.size()) * width;
        if (l.in_dim != expected) {
          invalid(where + "in_dim " + std::to_string(l.in_dim) + " but " + std::to_string(l.taps.size()) +
                  " taps x " + std::to_string(width) + " = " + std::to_string(expected));
        }
        ++tdnn_count;
        break;
      }
      case LayerKind::stats_pool:
        if (phase != frames || tdnn_count == 0) invalid(where + "exactly one stats_pool after the tdnn layers");
        if (l.in_dim != width) invalid(where + "in_dim must equal the per-frame width " + std::to_string(width));
        if (l.out_dim != 2 * l.in_dim) invalid(where + "out_dim must be 2 x in_dim");
        phase = pooled;
        break;
      case LayerKind::segment_linear:
      case LayerKind::softmax:
        if (phase != pooled) invalid(where + "segment and softmax layers must follow pooling");
        if (l.in_dim != width) {
          invalid(where + "in_dim " + std::to_string(l.in_dim) + " but previous width is " + std::to_string(width));
        }
        if (l.kind == LayerKind::segment_linear) {
          ++segment_count;
        } else {
          if (l.out_dim != n_classes) invalid(where + "softmax width must equal n_classes");
          phase = done;
        }
        break;
    }
    width = l.out_dim;
  }
  if (phase != done) invalid("the last layer must be a softmax");
  if (segment_count == 0) invalid("at least one segment layer is required for the embedding");
}

std::size_t ModelConfig::pool_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::stats_pool) return i;
  }
  invalid("no stats_pool layer");
}

std::size_t ModelConfig::min_frames() const {
  std::size_t width = 1;
  for (const auto& l : layers) width += static_cast<std::size_t>(l.span());
  return width + 1;
}

int ModelConfig::embedding_dim() const { return layers.at(pool_index() + 1).out_dim; }

ModelConfig build_config(int feature_dim, int n_classes, const std::vector<FrameLayer>& frames,
                         const std::vector<int>& segment_widths) {
  ModelConfig cfg;
  cfg.feature_dim = feature_dim;
  cfg.n_classes = n_classes;
  int width = feature_dim;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    cfg.layers.push_back({"frame" + std::to_string(i + 1), LayerKind::tdnn, f.taps, f.dilation,
                          static_cast<int>(f.taps.size()) * width, f.width});
    width = f.width;
  }
  cfg.layers.push_back({"stats_pool", LayerKind::stats_pool, {}, 1, width, 2 * width});
  width *= 2;
  std::size_t index = frames.size() + 1;
  for (int w : segment_widths) {
    cfg.layers.push_back({"segment" + std::to_string(index++), LayerKind::segment_linear, {}, 1, width, w});
    width = w;
  }
  cfg.layers.push_back({"softmax", LayerKind::softmax, {}, 1, width, n_classes});
  cfg.validate();
  return cfg;
}

ModelConfig enhanced_config(int feature_dim, int n_classes) {
  return build_config(feature_dim, n_classes,
                      {
                          {{-1, 0, 1}, 2, 1280},
                          {{0}, 1, 1280},
                          {{-2, -1, 0, 1, 2}, 2, 1024},
                          {{0}, 1, 1024},
                          {{-1, 1}, 1, 768},
                          {{0}, 1, 512},
                          {{0}, 1, 256},
                      });
}

ModelConfig baseline_config(int feature_dim, int n_classes) {
  return build_config(feature_dim, n_classes,
                      {
                          {{-2, -1, 0, 1, 2}, 1, 512},
                          {{-2, 0, 2}, 1, 512},
                          {{-3, 0, 3}, 1, 512},
                          {{0}, 1, 512},
                          {{0}, 1, 1500},
                      });
}

std::vector<int> context_taps(int context_size) {
  if (context_size < 1) throw Error(ErrorCode::InvalidArgument, "context size must be >= 1");
  std::vector<int> taps;
  const int k = context_size / 2;
  for (int t = -k; t <= k; ++t) {
    if (context_size % 2 == 0 && t == 0) continue;
    taps.push_back(t);
  }
  return taps;
}

std::vector<ReceptiveField> receptive_field(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ReceptiveField> out;
  std::set<int> reach{0};
  bool pooled = false;
  for (const auto& l : cfg.layers) {
    if (l.kind == LayerKind::tdnn) {
      const auto eff = l.effective_offsets();
      std::set<int> next;
      for (int a : reach) {
        for (int o : eff) next.insert(a + o - eff.front());
      }
      reach = std::move(next);
    } else {
      pooled = true;
    }
    ReceptiveField rf;
    rf.name = l.name;
    rf.offsets.assign(reach.begin(), reach.end());
    rf.total_width = static_cast<std::size_t>(*reach.rbegin()) + 1;
    rf.whole_sequence = pooled;
    rf.min_frames = rf.total_width + (pooled ? 1 : 0);
    out.push_back(std::move(rf));
  }
  return out;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : cfg.layers) {
    nlohmann::json j{{"name", l.name}, {"kind", to_string(l.kind)}, {"in_dim", l.in_dim}, {"out_dim", l.out_dim}};
    if (l.kind == LayerKind::tdnn) {
      j["taps"] = l.taps;
      j["dilation"] = l.dilation;
    }
    layers.push_back(std::move(j));
  }
  return {{"feature_dim", cfg.feature_dim}, {"n_classes", cfg.n_classes}, {"layers", std::move(layers)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.n_classes = j.at("n_classes").get<int>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.name = lj.at("name").get<std::string>();
      l.kind = parse_layer_kind(lj.at("kind").get<std::string>());
      l.in_dim = lj.at("in_dim").get<int>();
      l.out_dim = lj.at("out_dim").get<int>();
      if (l.kind == LayerKind::tdnn) {
        l.taps = lj.at("taps").get<std::vector<int>>();
        l.dilation = lj.value("dilation", 1);
      }
      cfg.layers.push_back(std::move(l));
    }
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    invalid(std::string("model config JSON: ") + e.what());
  }
}

template <typename Real>
Network<Real>::Network(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  for (const auto& l : cfg_.layers) {
    if (!has_weights(l.kind)) continue;
    const double limit = std::sqrt(6.0 / (l.in_dim + l.out_dim));
    std::uniform_real_distribution<double> dist(-limit, limit);
    ad::Tensor<Real> w({static_cast<std::size_t>(l.in_dim), static_cast<std::size_t>(l.out_dim)});
    for (auto& v : w.values()) v = static_cast<Real>(dist(rng));
    names_.push_back(l.name + ".weight");
    params_.push_back(ad::Value<Real>::leaf(std::move(w)));
    names_.push_back(l.name + ".bias");
    params_.push_back(ad::Value<Real>::leaf(ad::Tensor<Real>({static_cast<std::size_t>(l.out_dim)})));
  }
}

template <typename Real>
Network<Real>::Network(ModelConfig cfg, const ParameterSet& params) : Network(std::move(cfg), 0) {
  restore(params);
}

template <typename Real>
ParameterSet Network<Real>::snapshot() const {
  ParameterSet s;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    s.names.push_back(names_[i]);
    s.shapes.push_back(params_[i].shape());
    const auto v = params_[i].data().values();
    s.values.emplace_back(v.begin(), v.end());
  }
  return s;
}

template <typename Real>
void Network<Real>::restore(const ParameterSet& params) {
  if (params.size() != params_.size()) {
    throw Error(ErrorCode::CheckpointMismatch, "expected " + std::to_string(params_.size()) +
                                                   " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params.names[i] != names_[i] || params.shapes[i] != params_[i].shape()) {
      throw Error(ErrorCode::CheckpointMismatch, "parameter " + params.names[i] + ad::to_string(params.shapes[i]) +
                                                     " does not match " + names_[i] +
                                                     ad::to_string(params_[i].shape()));
    }
    auto dst = params_[i].mutable_data().values();
    std::transform(params.values[i].begin(), params.values[i].end(), dst.begin(),
                   [](double v) { return static_cast<Real>(v); });
    params_[i].zero_grad();
  }
}

template <typename Real>
typename Network<Real>::Outputs Network<Real>::run(const ad::Tensor<Real>& input) const {
  if (input.rank() < 2 || input.shape().back() != static_cast<std::size_t>(cfg_.feature_dim)) {
    throw Error(ErrorCode::DimensionMismatch, "input " + ad::to_string(input.shape()) + " but model expects F = " +
                                                  std::to_string(cfg_.feature_dim));
  }
  check_length(input.shape()[input.rank() - 2]);
  Outputs out;
  auto x = ad::Value<Real>::constant(input);
  std::size_t p = 0;
  bool first_segment = true;
  for (const auto& l : cfg_.layers) {
    switch (l.kind) {
      case LayerKind::tdnn:
        x = ad::relu(ad::tdnn_layer(x, std::span<const int>(l.taps), l.dilation, params_[p], params_[p + 1]));
        p += 2;
        out.frames = x;
        break;
      case LayerKind::stats_pool:
        x = ad::stats_pool(x);
        break;
      case LayerKind::segment_linear: {
        auto y = ad::linear(x, params_[p], params_[p + 1]);
        p += 2;
        if (first_segment) out.embedding = y;
        first_segment = false;
        x = ad::relu(y);
        break;
      }
      case LayerKind::softmax:
        out.logits = ad::linear(x, params_[p], params_[p + 1]);
        p += 2;
        break;
    }
  }
  return out;
}

template <typename Real>
ad::Value<Real> Network<Real>::frame_stack(const ad::Tensor<Real>& input) const {
  auto x = ad::Value<Real>::constant(input);
  std::size_t p = 0;
  for (const auto& l : cfg_.layers) {
    if (l.kind != LayerKind::tdnn) break;
    x = ad::relu(ad::tdnn_layer(x, std::span<const int>(l.taps), l.dilation, params_[p], params_[p + 1]));
    p += 2;
  }
  return x;
}

template <typename Real>
void Network<Real>::check_length(std::size_t frames) const {
  if (frames < cfg_.min_frames()) {
    throw Error(ErrorCode::SequenceTooShort, "model requires at least " + std::to_string(cfg_.min_frames()) +
                                                 " frames, got " + std::to_string(frames));
  }
}

template <typename Real>
ad::Tensor<Real> Network<Real>::to_input(const FeatureMatrix& feat) const {
  if (feat.dim() != static_cast<std::size_t>(cfg_.feature_dim)) {
    throw Error(ErrorCode::DimensionMismatch, "features have F = " + std::to_string(feat.dim()) +
                                                  ", model expects " + std::to_string(cfg_.feature_dim));
  }
  check_length(feat.frames());
  ad::Tensor<Real> t({feat.frames(), feat.dim()});
  std::transform(feat.values.data.begin(), feat.values.data.end(), t.values().begin(),
                 [](double v) { return static_cast<Real>(v); });
  return t;
}

template <typename Real>
std::vector<double> Network<Real>::posteriors(const FeatureMatrix& feat) const {
  ad::NoGradGuard no_grad;
  const auto out = run(to_input(feat));
  const auto p = ad::softmax(out.logits.data());
  return {p.values().begin(), p.values().end()};
}

template <typename Real>
std::vector<double> Network<Real>::embed(const FeatureMatrix& feat) const {
  ad::NoGradGuard no_grad;
  const auto out = run(to_input(feat));
  const auto v = out.embedding.data().values();
  return {v.begin(), v.end()};
}

template class Network<float>;
template class Network<double>;

}  // namespace xlid
