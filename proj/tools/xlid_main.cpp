// xlid: command-line front end for the language-ID toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xlid/augmentation.hpp"
#include "xlid/checkpoint.hpp"
#include "xlid/dataset.hpp"
#include "xlid/errors.hpp"
#include "xlid/kernels.hpp"
#include "xlid/model.hpp"
#include "xlid/toy_corpus.hpp"
#include "xlid/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct Globals {
  std::uint64_t seed = 0;
  std::string precision = "32";
  bool quiet = false;
};

// Feature flags shared by every subcommand that extracts features.
struct FeatureFlags {
  xlid::FeatureConfig cfg;
  int n_mfcc = 0;
  bool no_cmn = false;

  void attach(CLI::App* app) {
    auto* g = app->add_option_group("features");
    g->add_option("--n-mels", cfg.n_mels, "mel bands")->capture_default_str();
    g->add_option("--mfcc", n_mfcc, "keep this many cepstra (0: log-mel)")->capture_default_str();
    g->add_option("--frame-len-ms", cfg.frame_len_ms)->capture_default_str();
    g->add_option("--frame-shift-ms", cfg.frame_shift_ms)->capture_default_str();
    g->add_option("--preemphasis", cfg.preemphasis)->capture_default_str();
    g->add_option("--fft-size", cfg.fft_size)->capture_default_str();
    g->add_flag("--no-cmn", no_cmn, "skip per-utterance mean normalization");
  }

  xlid::FeatureConfig resolve() const {
    xlid::FeatureConfig c = cfg;
    if (n_mfcc > 0) c.n_mfcc = n_mfcc;
    c.mean_normalize = !no_cmn;
    c.validate(xlid::kCanonicalSampleRate);
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double chunk_s = 3.0;
  double lr = 1e-3;
  std::string optimizer = "adam";
  double max_eval_s = 0.0;

  void attach(CLI::App* app) {
    auto* g = app->add_option_group("training");
    g->add_option("--epochs", epochs)->capture_default_str();
    g->add_option("--batch-size", batch_size)->capture_default_str();
    g->add_option("--chunk-s", chunk_s, "training crop length in seconds")->capture_default_str();
    g->add_option("--lr", lr, "learning rate")->capture_default_str();
    g->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
    g->add_option("--max-eval-s", max_eval_s, "center-crop evaluation utterances (0: whole)")
        ->capture_default_str();
  }
};

std::optional<fs::path> cache_dir(const std::string& flag) {
  if (const char* env = std::getenv("XLID_CACHE_DIR"); env && *env) return fs::path(env);
  if (!flag.empty()) return fs::path(flag);
  return std::nullopt;
}

xlid::TrainConfig make_train_config(const Globals& g, const TrainFlags& t, const FeatureFlags& f,
                                    const std::string& cache_flag) {
  xlid::TrainConfig tc;
  tc.epochs = t.epochs;
  tc.batch_size = t.batch_size;
  tc.chunk_s = t.chunk_s;
  tc.optimizer.learning_rate = t.lr;
  tc.optimizer.kind = t.optimizer == "sgd" ? xlid::ad::OptimizerKind::sgd : xlid::ad::OptimizerKind::adam;
  tc.seed = g.seed;
  tc.precision = xlid::parse_precision(g.precision);
  tc.features = f.resolve();
  if (t.max_eval_s > 0.0) tc.max_eval_s = t.max_eval_s;
  tc.feature_cache_dir = cache_dir(cache_flag);
  tc.verbose = !g.quiet;
  tc.validate();
  return tc;
}

xlid::ModelConfig resolve_arch(const std::string& arch, int feature_dim, int n_classes) {
  if (arch == "enhanced") return xlid::enhanced_config(feature_dim, n_classes);
  if (arch == "baseline") return xlid::baseline_config(feature_dim, n_classes);
  std::ifstream in(arch);
  if (!in) throw xlid::Error(xlid::ErrorCode::InvalidArgument, "--arch: no such file or preset '" + arch + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw xlid::Error(xlid::ErrorCode::ParseError, arch + ": " + e.what());
  }
  auto cfg = xlid::model_config_from_json(j);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw xlid::Error(xlid::ErrorCode::IoFailure, "cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_run_manifest(const fs::path& dir, const std::string& sub, const Globals& g, const CLI::App& app,
                        const std::vector<std::string>& argv) {
  json j;
  j["tool"] = "xlid";
  j["version"] = kVersion;
  j["subcommand"] = sub;
  j["argv"] = argv;
  j["seed"] = g.seed;
  j["precision"] = g.precision;
  j["flags"] = app.config_to_str(true, false);
  j["threads"] = xlid::kernels::max_threads();
#if defined(__VERSION__)
  j["compiler"] = __VERSION__;
#endif
  write_json(dir / "run.json", j);
}

void print_report_files(const fs::path& dir, const xlid::RunReport& r) {
  write_json(dir / "report.json", r.to_json());
  write_text(dir / "confusion.csv", r.confusion.to_csv());
  write_text(dir / "confusion.txt", r.confusion.to_text());
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

int exit_code_for(xlid::ErrorCode code) {
  using xlid::ErrorCode;
  switch (code) {
    case ErrorCode::DivergedLoss:
    case ErrorCode::NonFinite:
      return kDiverged;
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidConfig:
    case ErrorCode::FactorOutOfRange:
    case ErrorCode::ShiftOutOfRange:
      return kUsage;
    default:
      return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Spoken language identification with x-vector TDNNs", "xlid"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", kVersion);

  Globals g;
  app.add_option("--seed", g.seed, "base random seed")->capture_default_str();
  app.add_option("--precision", g.precision, "arithmetic width")
      ->check(CLI::IsMember({"32", "64"}))
      ->capture_default_str();
  app.add_flag("--quiet", g.quiet, "no progress output");

  // features
  auto* features = app.add_subcommand("features", "extract and cache log-mel features");
  std::string feat_manifest, feat_out;
  FeatureFlags feat_flags;
  features->add_option("--manifest", feat_manifest, "input manifest CSV")->required()->check(CLI::ExistingFile);
  features->add_option("--out", feat_out, "cache directory (XLID_CACHE_DIR overrides)");
  feat_flags.attach(features);

  // augment
  auto* augment = app.add_subcommand("augment", "write perturbed copies of a corpus");
  std::string aug_manifest, aug_out;
  xlid::AugmentSpec aug_spec;
  std::vector<std::string> aug_noise{"gaussian"};
  augment->add_option("--manifest", aug_manifest)->required()->check(CLI::ExistingFile);
  augment->add_option("--out", aug_out)->required();
  augment->add_option("--speeds", aug_spec.speed_factors)->delimiter(',')->capture_default_str();
  augment->add_option("--pitch", aug_spec.pitch_semitones, "semitone shifts")->delimiter(',')->capture_default_str();
  augment->add_option("--noise", aug_noise, "none, white, pink, gaussian")->delimiter(',')->capture_default_str();
  augment->add_option("--snr-min", aug_spec.snr_db_min)->capture_default_str();
  augment->add_option("--snr-max", aug_spec.snr_db_max)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train a model and keep the best-validation checkpoint");
  std::string tr_train, tr_val, tr_arch = "enhanced", tr_out, tr_cache;
  TrainFlags tr_flags;
  FeatureFlags tr_feat;
  train->add_option("--train", tr_train)->required()->check(CLI::ExistingFile);
  train->add_option("--val", tr_val)->required()->check(CLI::ExistingFile);
  train->add_option("--arch", tr_arch, "enhanced, baseline or a model JSON file")->capture_default_str();
  train->add_option("--out", tr_out)->required();
  train->add_option("--cache-dir", tr_cache);
  tr_flags.attach(train);
  tr_feat.attach(train);

  // grid-search
  auto* grid = app.add_subcommand("grid-search", "sweep context size and dilation per layer");
  std::string gs_train, gs_val, gs_arch = "baseline", gs_out, gs_cache;
  std::vector<std::size_t> gs_layers{0};
  std::vector<int> gs_contexts{1, 2, 3, 5, 7}, gs_dilations{1, 2, 3};
  std::size_t gs_epochs = 3;
  TrainFlags gs_flags;
  FeatureFlags gs_feat;
  grid->add_option("--train", gs_train)->required()->check(CLI::ExistingFile);
  grid->add_option("--val", gs_val)->required()->check(CLI::ExistingFile);
  grid->add_option("--arch", gs_arch)->capture_default_str();
  grid->add_option("--layers", gs_layers, "layer indices, searched in order")->delimiter(',')->capture_default_str();
  grid->add_option("--contexts", gs_contexts)->delimiter(',')->capture_default_str();
  grid->add_option("--dilations", gs_dilations)->delimiter(',')->capture_default_str();
  grid->add_option("--epochs-per-cell", gs_epochs)->capture_default_str();
  grid->add_option("--out", gs_out)->required();
  grid->add_option("--cache-dir", gs_cache);
  gs_flags.attach(grid);
  gs_feat.attach(grid);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test manifest");
  std::string ev_ckpt, ev_test, ev_arch, ev_out, ev_cache;
  double ev_max_eval_s = 0.0;
  eval->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--test", ev_test)->required()->check(CLI::ExistingFile);
  eval->add_option("--arch", ev_arch, "expected architecture (enhanced, baseline or JSON file)");
  eval->add_option("--out", ev_out)->required();
  eval->add_option("--cache-dir", ev_cache);
  eval->add_option("--max-eval-s", ev_max_eval_s)->capture_default_str();

  // embed
  auto* embed = app.add_subcommand("embed", "write one x-vector per clip as CSV");
  std::string em_ckpt, em_manifest, em_out, em_cache;
  double em_max_eval_s = 0.0;
  embed->add_option("--checkpoint", em_ckpt)->required()->check(CLI::ExistingFile);
  embed->add_option("--manifest", em_manifest)->required()->check(CLI::ExistingFile);
  embed->add_option("--out", em_out, "output CSV")->required();
  embed->add_option("--cache-dir", em_cache);
  embed->add_option("--max-eval-s", em_max_eval_s)->capture_default_str();

  // ablation
  auto* ablation = app.add_subcommand("ablation", "train the six-row architecture comparison");
  std::string ab_train, ab_val, ab_aug, ab_out, ab_cache;
  TrainFlags ab_flags;
  FeatureFlags ab_feat;
  ablation->add_option("--train", ab_train)->required()->check(CLI::ExistingFile);
  ablation->add_option("--val", ab_val)->required()->check(CLI::ExistingFile);
  ablation->add_option("--augmented-train", ab_aug)->required()->check(CLI::ExistingFile);
  ablation->add_option("--out", ab_out)->required();
  ablation->add_option("--cache-dir", ab_cache);
  ab_flags.attach(ablation);
  ab_feat.attach(ablation);

  // make-toy
  auto* toy = app.add_subcommand("make-toy", "generate the synthetic three-language corpus and its splits");
  xlid::ToyCorpusSpec toy_spec;
  std::string toy_out;
  toy->add_option("--out", toy_out)->required();
  toy->add_option("--languages", toy_spec.languages)->capture_default_str();
  toy->add_option("--clips", toy_spec.clips_per_language, "clips per language")->capture_default_str();
  toy->add_option("--speakers", toy_spec.speakers_per_language, "speakers per language")->capture_default_str();
  toy->add_option("--duration-s", toy_spec.duration_s)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  const auto log = [&](const std::string& msg) {
    if (!g.quiet) std::cerr << msg << std::endl;
  };

  bool per_clip_subcommand = false;
  try {
    const xlid::Precision precision = xlid::parse_precision(g.precision);

    if (*features) {
      per_clip_subcommand = true;
      const auto dir = cache_dir(feat_out);
      if (!dir) throw xlid::Error(xlid::ErrorCode::InvalidArgument, "features needs --out or XLID_CACHE_DIR");
      const auto manifest = xlid::load_manifest(feat_manifest);
      xlid::FeatureStore store(feat_flags.resolve(), *dir);
      std::vector<std::string> failed;
      std::size_t done = 0;
      for (const auto& e : manifest.entries) {
        try {
          store.raw(e.path);
          ++done;
        } catch (const std::exception& ex) {
          failed.push_back(e.path);
          std::cerr << "xlid features: " << e.path << ": " << ex.what() << std::endl;
        }
      }
      write_run_manifest(*dir, "features", g, *features, args);
      if (!failed.empty()) {
        std::cerr << "xlid features: " << failed.size() << " clip(s) failed:" << std::endl;
        for (const auto& p : failed) std::cerr << "  " << p << std::endl;
        return kUsage;
      }
      std::cout << "features: " << done << " clips cached in " << dir->string() << std::endl;
      return kOk;
    }

    if (*augment) {
      per_clip_subcommand = true;
      aug_spec.rng_seed = g.seed;
      aug_spec.noise_kinds.clear();
      for (const auto& n : aug_noise) aug_spec.noise_kinds.push_back(xlid::parse_noise_kind(n));
      aug_spec.validate();
      const auto manifest = xlid::load_manifest(aug_manifest);
      const fs::path out(aug_out);
      fs::create_directories(out);
      const auto result = xlid::augment_corpus(manifest, aug_spec, out);
      xlid::save_manifest(result, out / "manifest.csv");
      write_run_manifest(out, "augment", g, *augment, args);
      std::cout << "augment: " << result.size() << " clips written to " << out.string() << std::endl;
      return kOk;
    }

    if (*train) {
      const auto tc_base = make_train_config(g, tr_flags, tr_feat, tr_cache);
      const auto train_set = xlid::load_manifest(tr_train);
      const auto val_set = xlid::load_manifest(tr_val, train_set.languages);
      const auto cfg = resolve_arch(tr_arch, tc_base.features.feature_dim(),
                                    static_cast<int>(train_set.languages.size()));
      auto tc = tc_base;
      tc.checkpoint_dir = fs::path(tr_out);
      fs::create_directories(tr_out);
      write_run_manifest(tr_out, "train", g, *train, args);
      try {
        const auto result = xlid::train(cfg, train_set, val_set, tc);
        print_report_files(tr_out, result.report);
        log(result.report.confusion.to_text());
        std::cout << "train: best epoch " << result.report.best_epoch << " val_accuracy "
                  << fmt(result.report.accuracy) << " checkpoint " << result.checkpoint->string() << std::endl;
      } catch (const xlid::Error& e) {
        if (e.code() != xlid::ErrorCode::DivergedLoss) throw;
        std::cerr << "xlid train: " << e.what() << std::endl;
        std::cerr << "xlid train: last good parameters saved under " << tr_out << std::endl;
        return kDiverged;
      }
      return kOk;
    }

    if (*grid) {
      const auto tc = make_train_config(g, gs_flags, gs_feat, gs_cache);
      const auto train_set = xlid::load_manifest(gs_train);
      const auto val_set = xlid::load_manifest(gs_val, train_set.languages);
      const auto base = resolve_arch(gs_arch, tc.features.feature_dim(), static_cast<int>(train_set.languages.size()));
      std::vector<xlid::GridSearchSpace> spaces;
      for (auto layer : gs_layers) spaces.push_back({layer, gs_contexts, gs_dilations, gs_epochs});
      fs::create_directories(gs_out);
      write_run_manifest(gs_out, "grid-search", g, *grid, args);
      const auto results = xlid::sequential_grid_search(spaces, base, train_set, val_set, tc);
      json all = json::array();
      std::string table;
      for (const auto& r : results) {
        all.push_back(r.to_json());
        table += "layer " + std::to_string(r.layer_index) + "\n" + r.to_table() + "\n";
      }
      write_json(fs::path(gs_out) / "grid.json", all);
      write_text(fs::path(gs_out) / "grid.txt", table);
      write_json(fs::path(gs_out) / "best_model.json", xlid::to_json(results.back().best_config));
      log(table);
      std::cout << "grid-search:";
      for (const auto& r : results) {
        const auto& b = r.cells[r.best];
        std::cout << " layer " << r.layer_index << " best context " << b.context_size << " dilation "
                  << b.dilation << " val_accuracy " << fmt(b.val_accuracy) << ";";
      }
      std::cout << std::endl;
      return kOk;
    }

    if (*eval) {
      xlid::EvalOptions opts{precision, std::nullopt, cache_dir(ev_cache)};
      if (ev_max_eval_s > 0.0) opts.max_eval_s = ev_max_eval_s;
      const auto model = xlid::load_checkpoint(ev_ckpt);
      const auto test_set = xlid::load_manifest(ev_test, model.languages);
      xlid::RunReport report;
      if (ev_arch.empty()) {
        report = xlid::evaluate(model, test_set, opts);
      } else {
        const auto cfg = resolve_arch(ev_arch, model.features.feature_dim(), static_cast<int>(model.languages.size()));
        report = xlid::evaluate(cfg, ev_ckpt, test_set, opts);
      }
      fs::create_directories(ev_out);
      write_run_manifest(ev_out, "eval", g, *eval, args);
      print_report_files(ev_out, report);
      log(report.confusion.to_text());
      std::cout << "eval: accuracy " << fmt(report.accuracy) << " (" << report.confusion.correct() << "/"
                << report.confusion.total() << ")" << std::endl;
      return kOk;
    }

    if (*embed) {
      xlid::EvalOptions opts{precision, std::nullopt, cache_dir(em_cache)};
      if (em_max_eval_s > 0.0) opts.max_eval_s = em_max_eval_s;
      const auto model = xlid::load_checkpoint(em_ckpt);
      const auto manifest = xlid::load_manifest(em_manifest, model.languages);
      const auto rows = xlid::embed_manifest(model, manifest, opts);
      std::ostringstream csv;
      csv << std::setprecision(9);
      for (const auto& [id, vec] : rows) {
        csv << id;
        for (double v : vec) csv << ',' << static_cast<float>(v);
        csv << '\n';
      }
      const fs::path out(em_out);
      write_text(out, csv.str());
      write_run_manifest(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "embed", g, *embed, args);
      std::cout << "embed: " << rows.size() << " x-vectors of dimension "
                << (rows.empty() ? 0 : rows.front().second.size()) << " written to " << out.string() << std::endl;
      return kOk;
    }

    if (*ablation) {
      auto tc = make_train_config(g, ab_flags, ab_feat, ab_cache);
      xlid::AblationData data;
      data.train = xlid::load_manifest(ab_train);
      data.val = xlid::load_manifest(ab_val, data.train.languages);
      data.augmented_train = xlid::load_manifest(ab_aug, data.train.languages);
      tc.checkpoint_dir = fs::path(ab_out);
      fs::create_directories(ab_out);
      write_run_manifest(ab_out, "ablation", g, *ablation, args);
      const auto rows = xlid::run_ablation(data, tc);
      write_json(fs::path(ab_out) / "ablation.json", xlid::ablation_json(rows));
      write_text(fs::path(ab_out) / "ablation.txt", xlid::ablation_table(rows));
      log(xlid::ablation_table(rows));
      std::cout << "ablation: " << rows.front().label << " " << fmt(rows.front().accuracy) << ", "
                << rows.back().label << " " << fmt(rows.back().accuracy) << std::endl;
      return kOk;
    }

    if (*toy) {
      toy_spec.seed = g.seed;
      const fs::path out(toy_out);
      const auto manifest = xlid::generate_toy_corpus(toy_spec, out);
      xlid::save_manifest(manifest, out / "manifest.csv");
      xlid::SplitSpec split;
      split.stratify_by_language = true;
      split.seed = g.seed;
      const auto parts = xlid::split(manifest, split);
      xlid::save_manifest(parts.train, out / "train.csv");
      xlid::save_manifest(parts.val, out / "val.csv");
      xlid::save_manifest(parts.test, out / "test.csv");
      write_run_manifest(out, "make-toy", g, *toy, args);
      std::cout << "make-toy: " << manifest.size() << " clips (" << parts.train.size() << " train, "
                << parts.val.size() << " val, " << parts.test.size() << " test) in " << out.string() << std::endl;
      return kOk;
    }
  } catch (const xlid::Error& e) {
    std::cerr << "xlid: " << e.what() << std::endl;
    return per_clip_subcommand ? kUsage : exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "xlid: " << e.what() << std::endl;
    return per_clip_subcommand ? kUsage : kData;
  } catch (const std::exception& e) {
    std::cerr << "xlid: " << e.what() << std::endl;
    return kData;
  }
  return kUsage;
}
