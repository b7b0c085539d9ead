#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fusiondiag/errors.hpp"
#include "fusiondiag/synth.hpp"
#include "fusiondiag/training.hpp"
#include "oracles.hpp"

namespace fdiag {
namespace {

ModelSpec reduced_vibration(std::size_t classes) {
  ModelSpec spec = default_spec(ModelKind::vibration_cnn, classes);
  spec.vibration_convs = {{8, 7, 4}, {16, 5, 4}, {16, 3, 2}};
  return spec;
}

// Windows with only labels and source ids filled in, for split tests.
WindowedDataset label_only_dataset(std::size_t classes, std::size_t per_class, std::size_t files_per_class = 1) {
  WindowedDataset ds;
  ds.class_names = default_class_names(classes);
  ds.mode = DatasetMode::vibration_only;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t w = 0; w < per_class; ++w) {
      ds.windows.push_back(
          Window{Tensor(), Tensor(), c, "c" + std::to_string(c) + "f" + std::to_string(w % files_per_class)});
    }
  }
  return ds;
}

// ------------------------------------------------------------ Loss

TEST(CrossEntropy, UniformPredictions) {
  EXPECT_NEAR(cross_entropy(Tensor({9}, 1.0 / 9.0), 4).loss, std::log(9.0), 1e-12);
  EXPECT_NEAR(cross_entropy(Tensor::vector({0.5, 0.5}), 0).loss, std::log(2.0), 1e-12);
}

TEST(CrossEntropy, GradientIsProbsMinusOneHot) {
  const Tensor probs = Tensor::vector({0.2, 0.5, 0.3});
  const LossResult r = cross_entropy(probs, 1);
  EXPECT_EQ(r.grad_logits, Tensor::vector({0.2, -0.5, 0.3}));
  double sum = 0.0;
  for (double g : r.grad_logits.values()) sum += g;
  EXPECT_NEAR(sum, 0.0, 1e-15);
}

TEST(CrossEntropy, FusedGradientMatchesFiniteDifferences) {
  Rng rng = rng_new(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = oracle::random_tensor({6}, rng, -3.0, 3.0);
    const std::size_t label = rng.below(6);
    const LossResult analytic = cross_entropy(softmax(logits), label);
    const Tensor numeric =
        oracle::numeric_gradient(logits, [&] { return -std::log(softmax(logits)[label]); });
    EXPECT_LT(oracle::max_relative_error(analytic.grad_logits, numeric), 1e-6);
  }
}

TEST(CrossEntropy, ClipsZeroProbability) {
  EXPECT_NEAR(cross_entropy(Tensor::vector({1.0, 0.0}), 1).loss, -std::log(1e-12), 1e-9);
  EXPECT_THROW(cross_entropy(Tensor::vector({0.5, 0.5}), 2), ConfigError);
}

// ------------------------------------------------------------ Adam

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p = Tensor::vector({1.0, -2.0});
  Tensor* params[] = {&p};
  const Tensor grads[] = {Tensor({2})};
  OptimizerState state{{Tensor({2})}, {Tensor({2})}, 0};
  adam_step(params, grads, state, AdamConfig{});
  EXPECT_EQ(p, Tensor::vector({1.0, -2.0}));
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  // With bias correction, m_hat = g and v_hat = g^2 after one step.
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  const std::vector<double> g{0.5, -3.0, 1e-4};
  Tensor p({3});
  Tensor* params[] = {&p};
  const Tensor grads[] = {Tensor({3}, g)};
  OptimizerState state{{Tensor({3})}, {Tensor({3})}, 0};
  adam_step(params, grads, state, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p[i], -cfg.learning_rate * g[i] / (std::fabs(g[i]) + cfg.epsilon), 1e-15);
  }
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, MatchesReferenceRecurrence) {
  const AdamConfig cfg{0.05, 0.8, 0.95, 1e-6};
  Tensor p = Tensor::vector({0.3});
  Tensor* params[] = {&p};
  OptimizerState state{{Tensor({1})}, {Tensor({1})}, 0};
  double x = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * x - 1.0;
    const Tensor grads[] = {Tensor::vector({2.0 * p[0] - 1.0})};
    adam_step(params, grads, state, cfg);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double m_hat = m / (1 - std::pow(cfg.beta1, t));
    const double v_hat = v / (1 - std::pow(cfg.beta2, t));
    x -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    EXPECT_NEAR(p[0], x, 1e-14);
  }
}

TEST(Adam, MismatchedGradientCount) {
  Tensor p({2});
  Tensor* params[] = {&p};
  OptimizerState state{{Tensor({2})}, {Tensor({2})}, 0};
  EXPECT_THROW(adam_step(params, std::span<const Tensor>{}, state, AdamConfig{}), ShapeError);
}

// ------------------------------------------------------------ Split

TEST(StratifiedSplit, SizesPerClass) {
  const WindowedDataset ds = label_only_dataset(9, 420);
  const Split s = stratified_split(ds, 0.8, 42, SplitGranularity::window);
  EXPECT_EQ(s.train.size(), 9u * 336u);
  EXPECT_EQ(s.validation.size(), 9u * 84u);
  std::vector<std::size_t> per_class(9, 0);
  for (std::size_t i : s.validation) ++per_class[ds.windows[i].label];
  for (std::size_t n : per_class) EXPECT_EQ(n, 84u);
}

TEST(StratifiedSplit, PartitionAndDeterminism) {
  const WindowedDataset ds = label_only_dataset(4, 37);
  const Split a = stratified_split(ds, 0.7, 5, SplitGranularity::window);
  const Split b = stratified_split(ds, 0.7, 5, SplitGranularity::window);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.validation.begin(), a.validation.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(ds.windows.size());
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
  EXPECT_NE(stratified_split(ds, 0.7, 6, SplitGranularity::window).train, a.train);
}

TEST(StratifiedSplit, ClassWithOneUnit) {
  WindowedDataset ds = label_only_dataset(3, 5);
  ds.windows.erase(ds.windows.begin() + 10, ds.windows.begin() + 14);  // class 2 keeps one
  EXPECT_THROW(stratified_split(ds, 0.8, 1, SplitGranularity::window), DataError);
}

TEST(StratifiedSplit, FileGranularityKeepsSourcesTogether) {
  const WindowedDataset ds = label_only_dataset(3, 40, 5);
  const Split s = stratified_split(ds, 0.8, 9, SplitGranularity::file);
  std::set<std::string> train_sources, val_sources;
  for (std::size_t i : s.train) train_sources.insert(ds.windows[i].source_id);
  for (std::size_t i : s.validation) val_sources.insert(ds.windows[i].source_id);
  for (const std::string& src : val_sources) EXPECT_EQ(train_sources.count(src), 0u) << src;
  EXPECT_EQ(val_sources.size(), 3u);  // one of five files per class
  EXPECT_THROW(stratified_split(label_only_dataset(3, 40, 1), 0.8, 9, SplitGranularity::file), DataError);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.split_ratio = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

// ------------------------------------------------------------ Fit / evaluate

WindowedDataset small_synth(std::size_t classes, std::size_t per_class) {
  SynthSpec s;
  s.num_classes = classes;
  s.windows_per_class = per_class;
  return synth_dataset(s);
}

TEST(Fit, OverfitsSmallTrainingSet) {
  const WindowedDataset ds = small_synth(4, 10);  // 32 train windows at ratio 0.8
  Rng rng = rng_new(1);
  Model model = build_model(reduced_vibration(4), rng);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.adam.learning_rate = 1e-3;
  const TrainReport report = fit(model, ds, cfg);
  ASSERT_EQ(report.split.train.size(), 32u);
  EXPECT_EQ(evaluate(model, ds, report.split.train).accuracy, 1.0);
  std::size_t non_increasing = 0;
  for (std::size_t e = 1; e < report.epochs.size(); ++e) {
    non_increasing += report.epochs[e].train_loss <= report.epochs[e - 1].train_loss;
  }
  EXPECT_GE(static_cast<double>(non_increasing), 0.9 * static_cast<double>(report.epochs.size() - 1));
}

TEST(Fit, RejectsIncompatibleDataset) {
  WindowedDataset ds = small_synth(3, 4);
  ds.mode = DatasetMode::acoustic_only;
  for (Window& w : ds.windows) w.vibration = Tensor();
  Rng rng = rng_new(1);
  Model model = build_model(reduced_vibration(3), rng);
  EXPECT_THROW(fit(model, ds, TrainConfig{}), DataError);
  Model wrong_classes = build_model(reduced_vibration(4), rng);
  EXPECT_THROW(fit(wrong_classes, small_synth(3, 4), TrainConfig{}), DataError);
}

TEST(Fit, DeterministicForSeed) {
  const WindowedDataset ds = small_synth(3, 6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  auto run = [&] {
    Rng rng = rng_new(11);
    Model model = build_model(reduced_vibration(3), rng);
    const TrainReport report = fit(model, ds, cfg);
    return std::make_pair(model, report);
  };
  const auto [m1, r1] = run();
  const auto [m2, r2] = run();
  const auto p1 = m1.parameters();
  const auto p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(*p1[i], *p2[i]);
  ASSERT_EQ(r1.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(r1.epochs[e].train_loss, r2.epochs[e].train_loss);
    EXPECT_EQ(r1.epochs[e].validation_accuracy, r2.epochs[e].validation_accuracy);
  }
  EXPECT_EQ(r1.confusion, r2.confusion);
}

TEST(Fit, NonFiniteLossIsNumericError) {
  WindowedDataset ds = small_synth(3, 5);
  ds.windows[0].vibration[0] = std::numeric_limits<double>::quiet_NaN();
  Rng rng = rng_new(2);
  Model model = build_model(reduced_vibration(3), rng);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  EXPECT_THROW(fit(model, ds, cfg), NumericError);
}

TEST(Evaluate, ConfusionIdentities) {
  const WindowedDataset ds = small_synth(3, 6);
  Rng rng = rng_new(4);
  const Model model = build_model(reduced_vibration(3), rng);
  std::vector<std::size_t> all(ds.windows.size());
  std::iota(all.begin(), all.end(), 0);
  const Evaluation ev = evaluate(model, ds, all);
  EXPECT_EQ(ev.confusion.total(), ds.windows.size());
  EXPECT_EQ(ev.accuracy, static_cast<double>(ev.confusion.trace()) / static_cast<double>(ds.windows.size()));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(ev.confusion.row_sum(c), 6u);
  EXPECT_THROW(evaluate(model, ds, std::vector<std::size_t>{}), DataError);
}

TEST(Evaluate, PerfectPredictorGivesDiagonal) {
  WindowedDataset ds = small_synth(3, 6);
  Rng rng = rng_new(5);
  const Model model = build_model(reduced_vibration(3), rng);
  // Relabel every window with the model's own prediction.
  for (Window& w : ds.windows) {
    const Tensor p = predict(model, input_for(model, w));
    w.label = static_cast<std::size_t>(std::max_element(p.values().begin(), p.values().end()) -
                                       p.values().begin());
  }
  std::vector<std::size_t> all(ds.windows.size());
  std::iota(all.begin(), all.end(), 0);
  const Evaluation ev = evaluate(model, ds, all);
  EXPECT_EQ(ev.accuracy, 1.0);
  EXPECT_EQ(ev.confusion.trace(), ev.confusion.total());
}

TEST(Report, RendersEpochRowsAndTiming) {
  TrainReport report;
  report.epochs = {{1, 2.0, 0.25, 0.5}, {2, 1.0, 0.5, 0.75}};
  report.wall_seconds = 1.5;
  const std::string text = render_report(report);
  EXPECT_NE(text.find("epoch,train_loss,train_accuracy,validation_accuracy"), std::string::npos);
  EXPECT_NE(text.find("2,1,0.5,0.75"), std::string::npos);
  EXPECT_NE(text.find("[timing]"), std::string::npos);
}

}  // namespace
}  // namespace fdiag
