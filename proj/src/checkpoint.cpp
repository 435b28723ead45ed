#include "xlid/checkpoint.hpp"

#include <fstream>

#include "byte_io.hpp"
#include "xlid/errors.hpp"

namespace xlid {

nlohmann::json to_json(const FeatureConfig& cfg) {
  nlohmann::json j{{"n_mels", cfg.n_mels},
                   {"frame_len_ms", cfg.frame_len_ms},
                   {"frame_shift_ms", cfg.frame_shift_ms},
                   {"preemphasis", cfg.preemphasis},
                   {"fft_size", cfg.fft_size},
                   {"mean_normalize", cfg.mean_normalize}};
  j["n_mfcc"] = cfg.n_mfcc ? nlohmann::json(*cfg.n_mfcc) : nlohmann::json(nullptr);
  return j;
}

FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig cfg;
  cfg.n_mels = j.value("n_mels", cfg.n_mels);
  cfg.frame_len_ms = j.value("frame_len_ms", cfg.frame_len_ms);
  cfg.frame_shift_ms = j.value("frame_shift_ms", cfg.frame_shift_ms);
  cfg.preemphasis = j.value("preemphasis", cfg.preemphasis);
  cfg.fft_size = j.value("fft_size", cfg.fft_size);
  cfg.mean_normalize = j.value("mean_normalize", cfg.mean_normalize);
  if (j.contains("n_mfcc") && !j["n_mfcc"].is_null()) cfg.n_mfcc = j["n_mfcc"].get<int>();
  return cfg;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  const nlohmann::json config{{"model", to_json(model.model)},
                              {"features", to_json(model.features)},
                              {"languages", model.languages}};
  const std::string blob = config.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write checkpoint " + path.string());
  out.write("XLCK", 4);
  detail::write_u32(out, kCheckpointVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(blob.size()));
  detail::write_bytes(out, blob);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const std::string& name = model.params.names[i];
    detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
    detail::write_bytes(out, name);
    const auto& shape = model.params.shapes[i];
    detail::write_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : model.params.values[i]) detail::write_f32(out, static_cast<float>(v));
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open checkpoint " + path.string());
  const std::string what = "checkpoint " + path.string();
  if (detail::read_string(in, 4, what) != "XLCK") {
    throw Error(ErrorCode::MalformedHeader, "bad magic in " + path.string());
  }
  const auto version = detail::read_pod<std::uint32_t>(in, what);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::MalformedHeader, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto blob_len = detail::read_pod<std::uint32_t>(in, what);
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(detail::read_string(in, blob_len, what));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, "checkpoint config: " + std::string(e.what()));
  }
  TrainedModel model;
  model.model = model_config_from_json(config.at("model"));
  model.features = feature_config_from_json(config.value("features", nlohmann::json::object()));
  model.languages = config.value("languages", std::vector<std::string>{});

  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = detail::read_pod<std::uint32_t>(in, what);
    std::string name = detail::read_string(in, name_len, what);
    const auto rank = detail::read_pod<std::uint32_t>(in, what);
    ad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(detail::read_pod<std::uint32_t>(in, what));
    std::vector<double> values(ad::numel(shape));
    for (double& v : values) v = detail::read_pod<float>(in, what);
    model.params.names.push_back(std::move(name));
    model.params.shapes.push_back(std::move(shape));
    model.params.values.push_back(std::move(values));
  }
  return model;
}

}  // namespace xlid
