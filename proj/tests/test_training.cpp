#include "test_support.hpp"
#include "xlid/toy_corpus.hpp"
#include "xlid/training.hpp"

namespace xlid {
namespace {

using test::expect_error;

TEST(Confusion, PerfectClassifierIsDiagonal) {
  ConfusionMatrix cm({"a", "b", "c"});
  for (int i = 0; i < 12; ++i) cm.add(i % 3, i % 3);
  EXPECT_EQ(cm.accuracy(), 1.0);
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) EXPECT_EQ(cm.count(t, p), t == p ? 4u : 0u);
  }
}

TEST(Confusion, ConstantClassifierOverTenClasses) {
  std::vector<std::string> labels;
  for (int i = 0; i < 10; ++i) labels.push_back("l" + std::to_string(i));
  ConfusionMatrix cm(labels);
  for (int t = 0; t < 10; ++t) {
    for (int k = 0; k < 7; ++k) cm.add(t, 3);
  }
  EXPECT_DOUBLE_EQ(cm.accuracy(), 0.1);
  for (int t = 0; t < 10; ++t) EXPECT_EQ(cm.row_total(t), 7u);
  EXPECT_EQ(cm.total(), 70u);
  expect_error(ErrorCode::LabelOutOfRange, [&] { cm.add(10, 0); });
}

TEST(Confusion, Renderings) {
  ConfusionMatrix cm({"en", "fr"});
  cm.add(0, 0);
  cm.add(0, 1);
  cm.add(1, 1);
  EXPECT_EQ(cm.to_csv(), "true\\predicted,en,fr\nen,1,1\nfr,0,1\n");
  const auto j = cm.to_json();
  EXPECT_EQ(j["labels"], nlohmann::json({"en", "fr"}));
  EXPECT_NE(cm.to_text().find("fr"), std::string::npos);
  EXPECT_EQ(ConfusionMatrix().accuracy(), 0.0);
}

GridCell cell(int c, int d, std::size_t idx, double acc, bool valid = true) {
  GridCell g;
  g.context_size = c;
  g.dilation = d;
  g.declaration_index = idx;
  g.val_accuracy = acc;
  g.valid = valid;
  return g;
}

TEST(GridSearch, TieBreaks) {
  EXPECT_EQ(select_best_cell({cell(3, 2, 0, 0.5), cell(3, 1, 1, 0.5)}), 1u);
  EXPECT_EQ(select_best_cell({cell(5, 1, 0, 0.5), cell(3, 1, 1, 0.5)}), 1u);
  EXPECT_EQ(select_best_cell({cell(3, 1, 0, 0.5), cell(3, 1, 1, 0.5)}), 0u);
  EXPECT_EQ(select_best_cell({cell(3, 1, 0, 0.4), cell(7, 3, 1, 0.6)}), 1u);
  EXPECT_EQ(select_best_cell({cell(1, 1, 0, 0.9, false), cell(7, 3, 1, 0.1)}), 1u);
  expect_error(ErrorCode::InvalidCell, [] { select_best_cell({cell(1, 1, 0, 0.9, false)}); });
}

TEST(GridSearch, SpaceValidation) {
  const auto base = baseline_config(24, 3);
  GridSearchSpace s;
  s.validate(base);
  s.layer_index = 5;
  EXPECT_THROW(s.validate(base), Error);
  s = {};
  s.context_sizes.clear();
  EXPECT_THROW(s.validate(base), Error);
  s = {};
  s.dilations = {0};
  EXPECT_THROW(s.validate(base), Error);
}

TEST(GridSearch, WithLayerContextRechains) {
  const auto base = baseline_config(24, 3);
  const auto cfg = with_layer_context(base, 0, 2, 3);
  EXPECT_EQ(cfg.layers[0].taps, (std::vector<int>{-1, 1}));
  EXPECT_EQ(cfg.layers[0].dilation, 3);
  EXPECT_EQ(cfg.layers[0].in_dim, 48);
  cfg.validate();
  const auto second = with_layer_context(base, 1, 7, 1);
  EXPECT_EQ(second.layers[1].in_dim, 7 * base.layers[0].out_dim);
  second.validate();
}

TEST(Ablation, SixLabelledVariants) {
  const auto v = ablation_variants(24, 3);
  std::vector<std::string> labels;
  for (const auto& x : v) labels.push_back(x.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"Baseline", "Grid Search", "Intermediate Layers", "Funnel Structure",
                                              "Integrated Approach", "Final Model"}));
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i].config.validate();
    EXPECT_EQ(v[i].augmented, i == 5);
  }
  EXPECT_EQ(v[0].config, baseline_config(24, 3));
  EXPECT_EQ(v[4].config, v[5].config);
}

TEST(TrainConfig, Invariants) {
  TrainConfig tc;
  tc.epochs = 0;
  expect_error(ErrorCode::InvalidArgument, [&] { tc.validate(); });
  tc = {};
  tc.batch_size = 0;
  expect_error(ErrorCode::InvalidArgument, [&] { tc.validate(); });
  tc = {};
  tc.chunk_s = 0.0;
  expect_error(ErrorCode::InvalidArgument, [&] { tc.validate(); });
  EXPECT_EQ(parse_precision("64"), Precision::f64);
  EXPECT_EQ(parse_precision("f32"), Precision::f32);
  EXPECT_THROW(parse_precision("16"), Error);
}

// Small corpus and model shared by the training tests below.
class TinyTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new test::TempDir();
    ToyCorpusSpec spec;
    spec.languages = 2;
    spec.clips_per_language = 12;
    spec.speakers_per_language = 4;
    spec.duration_s = 0.6;
    spec.seed = 4;
    const auto all = generate_toy_corpus(spec, *root_ / "corpus");
    SplitSpec ss;
    ss.stratify_by_language = true;
    ss.train_frac = 0.5;
    ss.val_frac = 0.25;
    ss.test_frac = 0.25;
    splits_ = new Splits(split(all, ss));
  }
  static void TearDownTestSuite() {
    delete splits_;
    delete root_;
  }

  static ModelConfig model() { return build_config(24, 2, {{{-1, 0, 1}, 1, 12}, {{-2, 0, 2}, 1, 10}}, {8, 8}); }

  static TrainConfig config() {
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.chunk_s = 0.4;
    tc.seed = 11;
    tc.precision = Precision::f64;
    return tc;
  }

  static inline test::TempDir* root_ = nullptr;
  static inline Splits* splits_ = nullptr;
};

TEST_F(TinyTraining, SplitIsUsable) {
  EXPECT_FALSE(splits_->train.empty());
  EXPECT_FALSE(splits_->val.empty());
  EXPECT_FALSE(splits_->test.empty());
}

TEST_F(TinyTraining, DeterministicIn64Bit) {
  const auto a = train(model(), splits_->train, splits_->val, config());
  const auto b = train(model(), splits_->train, splits_->val, config());
  EXPECT_TRUE(a.report.same_metrics(b.report));
  EXPECT_EQ(a.model.params.values, b.model.params.values);
  ASSERT_EQ(a.report.epochs.size(), 2u);
  EXPECT_GE(a.report.best_epoch, 1u);
  EXPECT_EQ(a.report.accuracy, a.report.epochs[a.report.best_epoch - 1].val_accuracy);
  EXPECT_EQ(a.report.confusion.total(), splits_->val.size());
  EXPECT_DOUBLE_EQ(a.report.accuracy,
                   static_cast<double>(a.report.confusion.correct()) / static_cast<double>(a.report.confusion.total()));
}

TEST_F(TinyTraining, DifferentSeedDiffers) {
  auto tc = config();
  tc.epochs = 1;
  const auto a = train(model(), splits_->train, splits_->val, tc);
  tc.seed = 12;
  const auto b = train(model(), splits_->train, splits_->val, tc);
  EXPECT_NE(a.model.params.values, b.model.params.values);
}

TEST_F(TinyTraining, CheckpointAndEvaluate) {
  test::TempDir dir;
  auto tc = config();
  tc.checkpoint_dir = dir.path();
  const auto r = train(model(), splits_->train, splits_->val, tc);
  ASSERT_TRUE(r.checkpoint);
  EXPECT_EQ(r.checkpoint->filename(), "best.xlck");
  EvalOptions opts;
  opts.precision = Precision::f64;
  const auto direct = evaluate(r.model, splits_->test, opts);
  const auto via_file = evaluate(model(), *r.checkpoint, splits_->test, opts);
  EXPECT_EQ(via_file.confusion.total(), splits_->test.size());
  for (int t = 0; t < 2; ++t) {
    EXPECT_EQ(direct.confusion.row_total(t), splits_->test.counts_by_language().at(splits_->test.languages[t]));
  }
  const auto embeddings = embed_manifest(r.model, splits_->test, opts);
  ASSERT_EQ(embeddings.size(), splits_->test.size());
  EXPECT_EQ(embeddings[0].second.size(), 8u);
}

TEST_F(TinyTraining, DivergenceStopsAndSavesLastGood) {
  test::TempDir dir;
  auto tc = config();
  tc.precision = Precision::f32;
  tc.optimizer.kind = ad::OptimizerKind::sgd;
  tc.optimizer.learning_rate = 1e30;
  tc.checkpoint_dir = dir.path();
  expect_error(ErrorCode::DivergedLoss, [&] { train(model(), splits_->train, splits_->val, tc); });
  EXPECT_TRUE(std::filesystem::exists(dir / "last_good.xlck"));
  const auto saved = load_checkpoint(dir / "last_good.xlck");
  for (const auto& p : saved.params.values) {
    for (double v : p) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST_F(TinyTraining, RejectsBadInputs) {
  auto tc = config();
  tc.chunk_s = 0.05;
  expect_error(ErrorCode::SequenceTooShort, [&] { train(model(), splits_->train, splits_->val, tc); });
  expect_error(ErrorCode::NoUsableClips, [&] { train(model(), Manifest{}, splits_->val, config()); });
  const auto wrong = build_config(24, 3, {{{0}, 1, 4}}, {4, 4});
  expect_error(ErrorCode::DimensionMismatch, [&] { train(wrong, splits_->train, splits_->val, config()); });
}

TEST_F(TinyTraining, GridSearchSingleCellAndInvalidCell) {
  GridSearchSpace space;
  space.layer_index = 1;
  space.context_sizes = {1};
  space.dilations = {1};
  space.epochs_per_cell = 1;
  const auto one = grid_search(space, model(), splits_->train, splits_->val, config());
  ASSERT_EQ(one.cells.size(), 1u);
  EXPECT_EQ(one.best, 0u);
  EXPECT_TRUE(one.cells[0].valid);
  EXPECT_EQ(one.best_config.layers[1].taps, (std::vector<int>{0}));

  space.context_sizes = {1, 7};
  space.dilations = {1, 9};
  const auto r = grid_search(space, model(), splits_->train, splits_->val, config());
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_FALSE(r.cells[3].valid);
  EXPECT_NE(r.cells[3].status.find("InvalidCell"), std::string::npos);
  EXPECT_TRUE(r.cells[0].valid);
  EXPECT_TRUE(r.cells[r.best].valid);
  EXPECT_EQ(r.to_json()["cells"].size(), 4u);
  EXPECT_NE(r.to_table().find("InvalidCell"), std::string::npos);
}

}  // namespace
}  // namespace xlid
