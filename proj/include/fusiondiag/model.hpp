#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fusiondiag/layers.hpp"
#include "fusiondiag/rng.hpp"
#include "fusiondiag/tensor.hpp"

namespace fdiag {

enum class ModelKind { vibration_cnn, acoustic_cnn_lstm, fusion };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

bool uses_vibration(ModelKind kind);
bool uses_acoustic(ModelKind kind);

// One Conv1D(channels, kernel) + ReLU + MaxPool(pool) block.
struct ConvStage {
  std::size_t channels = 16;
  std::size_t kernel = 7;
  std::size_t pool = 2;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

/// Declarative description of one of the three networks.
///
/// The vibration branch is a stack of ConvStage blocks followed by Flatten.
/// The acoustic branch is ConvStage blocks, then one LSTM per entry of
/// lstm_units (all returning sequences), then Flatten. The head is
/// Dense(dense_units) + ReLU + Dense(num_classes) + softmax over the
/// flattened branch output, or over concat(vibration, acoustic) for fusion.
struct ModelSpec {
  ModelKind kind = ModelKind::vibration_cnn;
  std::size_t num_classes = 9;
  std::size_t input_len = 1000;
  std::vector<ConvStage> vibration_convs{{16, 7, 2}, {32, 5, 2}, {64, 3, 2}};
  std::vector<ConvStage> acoustic_convs{{16, 7, 2}, {32, 5, 2}};
  std::vector<std::size_t> lstm_units{64, 64};
  std::size_t dense_units = 32;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

ModelSpec default_spec(ModelKind kind, std::size_t num_classes = 9);

// Output shape after each layer, as computed from the spec alone.
struct ShapeStep {
  std::string layer;
  Shape shape;
};

// Per-branch shape chain; throws ConfigError naming the layer where the time
// axis collapses below one step.
std::vector<ShapeStep> vibration_shape_chain(const ModelSpec& spec);
std::vector<ShapeStep> acoustic_shape_chain(const ModelSpec& spec);

using Layer = std::variant<Conv1DLayer, MaxPoolLayer, ReluLayer, DenseLayer, LstmLayer, FlattenLayer>;
using LayerCache = std::variant<Conv1DCache, MaxPoolCache, ReluCache, DenseCache, LstmCache,
                                Shape /* flatten input shape */>;

struct Model {
  ModelSpec spec;
  std::vector<std::string> class_names;
  std::vector<Layer> vibration_branch;  // empty unless the kind uses vibration
  std::vector<Layer> acoustic_branch;   // empty unless the kind uses acoustic
  std::vector<Layer> head;

  // Parameter tensors in a fixed order: vibration branch, acoustic branch, head.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
};

Model build_vibration_model(const ModelSpec& spec, Rng& rng);
Model build_acoustic_model(const ModelSpec& spec, Rng& rng);
Model build_fusion_model(const ModelSpec& spec, Rng& rng);
// Dispatches on spec.kind.
Model build_model(const ModelSpec& spec, Rng& rng);

struct ModelInput {
  const Tensor* vibration = nullptr;  // [input_len, 1]
  const Tensor* acoustic = nullptr;   // [input_len, 1]
};

struct ForwardTrace {
  std::vector<LayerCache> vibration;
  std::vector<LayerCache> acoustic;
  std::vector<LayerCache> head;
  std::size_t vibration_width = 0;
  std::size_t acoustic_width = 0;
  Tensor logits;
};

struct ForwardResult {
  Tensor probs;
  ForwardTrace trace;
};

ForwardResult model_forward(const Model& model, const ModelInput& input);
// Inference only; no trace retained.
Tensor predict(const Model& model, const ModelInput& input);

// One gradient tensor per entry of Model::parameters(), same order and shapes.
using Gradients = std::vector<Tensor>;

Gradients zero_gradients(const Model& model);
// Chain rule over the whole network, given dLoss/dLogits.
Gradients model_backward(const Model& model, const ForwardTrace& trace, const Tensor& grad_logits);

// Weight file: "FMDL1" magic line, text metadata with the parameter manifest,
// then little-endian binary64 blobs in manifest order.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace fdiag
