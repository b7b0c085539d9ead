#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fusiondiag/data.hpp"
#include "fusiondiag/metrics.hpp"
#include "fusiondiag/model.hpp"

namespace fdiag {

enum class SplitGranularity { window, file };

std::string_view to_string(SplitGranularity granularity);
SplitGranularity parse_split_granularity(std::string_view text);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::uint64_t seed = 42;
  double split_ratio = 0.8;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  AdamConfig adam;
  // Window-level splitting lets windows cut from one recording land on both
  // sides of the split; file-level keeps each recording on one side.
  SplitGranularity split_granularity = SplitGranularity::window;

  // Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const Model& model);

// Bias-corrected Adam update of params in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, const AdamConfig& config);
void apply_gradients(Model& model, const Gradients& grads, OptimizerState& state,
                     const AdamConfig& config);

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;  // probs - onehot(true_class)
};

// -ln(max(probs[true_class], 1e-12)) with the fused softmax+CE logit gradient.
LossResult cross_entropy(const Tensor& probs, std::size_t true_class);

struct Split {
  std::vector<std::size_t> train;       // ascending window indices
  std::vector<std::size_t> validation;  // ascending window indices
};

// Per class, floor(ratio * n_c) units go to train (at least one stays in
// validation); units are windows or source files by granularity.
Split stratified_split(const WindowedDataset& dataset, double ratio, std::uint64_t seed,
                       SplitGranularity granularity);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;      // mean over the epoch's mini-batch samples
  double train_accuracy = 0.0;  // running, measured before each batch update
  double validation_accuracy = 0.0;
};

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  ConfusionMatrix confusion;  // validation split after the last epoch
  Split split;
  double wall_seconds = 0.0;
};

// Model inputs for a window, taking only the modalities the kind consumes.
ModelInput input_for(const Model& model, const Window& window);

Evaluation evaluate(const Model& model, const WindowedDataset& dataset,
                    std::span<const std::size_t> indices);

using EpochCallback = std::function<void(const EpochStats&)>;

TrainReport fit(Model& model, const WindowedDataset& dataset, const TrainConfig& config,
                const EpochCallback& on_epoch = {});

// Per-epoch CSV rows followed by a [timing] section holding wall time.
std::string render_report(const TrainReport& report);

}  // namespace fdiag
