#include "fusiondiag/model.hpp"

#include <algorithm>
#include <type_traits>

#include "fusiondiag/data.hpp"
#include "fusiondiag/errors.hpp"

namespace fdiag {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::size_t kSignalChannels = 1;

std::string ordinal_name(std::string_view branch, std::string_view layer, std::size_t index) {
  return std::string(branch) + " " + std::string(layer) + std::to_string(index + 1);
}

// Shape chain through the conv/pool stages of one branch. Returns the
// (time, channels) shape entering whatever follows the stages.
std::pair<std::size_t, std::size_t> conv_chain(std::string_view branch, std::size_t input_len,
                                               const std::vector<ConvStage>& stages,
                                               std::vector<ShapeStep>& steps) {
  std::size_t length = input_len;
  std::size_t channels = kSignalChannels;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const ConvStage& stage = stages[s];
    if (stage.channels == 0 || stage.kernel == 0) {
      throw ConfigError(ordinal_name(branch, "conv", s) + ": channels and kernel must be >= 1");
    }
    if (stage.pool < 2) {
      throw ConfigError(ordinal_name(branch, "pool", s) + ": pool size must be >= 2");
    }
    if (length < stage.kernel) {
      throw ConfigError(ordinal_name(branch, "conv", s) + " (kernel " +
                        std::to_string(stage.kernel) + ") receives only " +
                        std::to_string(length) + " time steps");
    }
    length = length - stage.kernel + 1;
    channels = stage.channels;
    steps.push_back({ordinal_name(branch, "conv", s), {length, channels}});
    if (length < stage.pool) {
      throw ConfigError(ordinal_name(branch, "pool", s) + " (pool " + std::to_string(stage.pool) +
                        ") receives only " + std::to_string(length) + " time steps");
    }
    length /= stage.pool;
    steps.push_back({ordinal_name(branch, "pool", s), {length, channels}});
  }
  return {length, channels};
}

Conv1DLayer make_conv(std::size_t c_in, const ConvStage& stage, Rng& rng) {
  return Conv1DLayer{glorot_uniform({stage.kernel, c_in, stage.channels}, stage.kernel * c_in,
                                    stage.kernel * stage.channels, rng),
                     Tensor({stage.channels})};
}

DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
  return DenseLayer{glorot_uniform(in, out, rng), Tensor({out})};
}

LstmLayer make_lstm(std::size_t c_in, std::size_t units, Rng& rng) {
  LstmLayer layer{glorot_uniform(c_in, 4 * units, rng), glorot_uniform(units, 4 * units, rng),
                  Tensor({4 * units})};
  for (std::size_t u = 0; u < units; ++u) layer.bias[units + u] = 1.0;  // forget gate
  return layer;
}

void append_conv_stages(std::vector<Layer>& branch, const std::vector<ConvStage>& stages,
                        Rng& rng) {
  std::size_t c_in = kSignalChannels;
  for (const ConvStage& stage : stages) {
    branch.emplace_back(make_conv(c_in, stage, rng));
    branch.emplace_back(ReluLayer{});
    branch.emplace_back(MaxPoolLayer{stage.pool});
    c_in = stage.channels;
  }
}

std::vector<Layer> build_vibration_branch(const ModelSpec& spec, Rng& rng) {
  std::vector<Layer> branch;
  append_conv_stages(branch, spec.vibration_convs, rng);
  branch.emplace_back(FlattenLayer{});
  return branch;
}

std::vector<Layer> build_acoustic_branch(const ModelSpec& spec, Rng& rng) {
  std::vector<Layer> branch;
  append_conv_stages(branch, spec.acoustic_convs, rng);
  std::size_t c_in = spec.acoustic_convs.empty() ? kSignalChannels
                                                 : spec.acoustic_convs.back().channels;
  for (std::size_t units : spec.lstm_units) {
    branch.emplace_back(make_lstm(c_in, units, rng));
    c_in = units;
  }
  branch.emplace_back(FlattenLayer{});
  return branch;
}

std::vector<Layer> build_head(const ModelSpec& spec, std::size_t in_width, Rng& rng) {
  std::vector<Layer> head;
  head.emplace_back(make_dense(in_width, spec.dense_units, rng));
  head.emplace_back(ReluLayer{});
  head.emplace_back(make_dense(spec.dense_units, spec.num_classes, rng));
  return head;
}

void check_common(const ModelSpec& spec, ModelKind expected) {
  if (spec.kind != expected) {
    throw ConfigError("spec kind " + std::string(to_string(spec.kind)) + " passed to " +
                      std::string(to_string(expected)) + " builder");
  }
  if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (spec.input_len == 0) throw ConfigError("input_len must be >= 1");
  if (spec.dense_units == 0) throw ConfigError("dense_units must be >= 1");
}

std::size_t branch_width(const std::vector<ShapeStep>& chain) { return chain.back().shape[0]; }

// Parameter tensors of a single layer, in serialization order.
template <class LayerT, class Fn>
void for_each_param(LayerT& layer, Fn&& fn) {
  std::visit(Overloaded{
                 [&](auto& l) {
                   using L = std::decay_t<decltype(l)>;
                   if constexpr (std::is_same_v<L, Conv1DLayer>) {
                     fn(l.kernels, "kernels");
                     fn(l.bias, "bias");
                   } else if constexpr (std::is_same_v<L, DenseLayer>) {
                     fn(l.weights, "weights");
                     fn(l.bias, "bias");
                   } else if constexpr (std::is_same_v<L, LstmLayer>) {
                     fn(l.input_kernel, "input_kernel");
                     fn(l.recurrent_kernel, "recurrent_kernel");
                     fn(l.bias, "bias");
                   }
                 },
             },
             layer);
}

Tensor run_stack(const std::vector<Layer>& stack, Tensor x, std::vector<LayerCache>* caches) {
  for (const Layer& layer : stack) {
    std::visit(Overloaded{
                   [&](const Conv1DLayer& l) {
                     auto [y, cache] = conv1d_forward(l, x);
                     if (caches) caches->emplace_back(std::move(cache));
                     x = std::move(y);
                   },
                   [&](const MaxPoolLayer& l) {
                     auto [y, cache] = maxpool1d_forward(l, x);
                     if (caches) caches->emplace_back(std::move(cache));
                     x = std::move(y);
                   },
                   [&](const ReluLayer&) {
                     if (caches) {
                       auto [y, cache] = relu_forward(x);
                       caches->emplace_back(std::move(cache));
                       x = std::move(y);
                     } else {
                       x = relu(x);
                     }
                   },
                   [&](const DenseLayer& l) {
                     auto [y, cache] = dense_forward(l, x);
                     if (caches) caches->emplace_back(std::move(cache));
                     x = std::move(y);
                   },
                   [&](const LstmLayer& l) {
                     auto [y, cache] = lstm_forward(l, x, true);
                     if (caches) caches->emplace_back(std::move(cache));
                     x = std::move(y);
                   },
                   [&](const FlattenLayer&) {
                     if (caches) caches->emplace_back(x.shape());
                     x = flatten(x);
                   },
               },
               layer);
  }
  return x;
}

template <class Cache>
const Cache& cache_as(const LayerCache& cache) {
  const Cache* typed = std::get_if<Cache>(&cache);
  if (!typed) throw ShapeError("stale forward cache: layer type mismatch");
  return *typed;
}

// Backward through one stack. Parameter gradients for the stack start at
// grads[first_param]. Returns the gradient w.r.t. the stack input.
Tensor backward_stack(const std::vector<Layer>& stack, const std::vector<LayerCache>& caches,
                      Tensor grad, Gradients& grads, std::size_t first_param) {
  if (caches.size() != stack.size()) throw ShapeError("stale forward cache: layer count mismatch");
  std::vector<std::size_t> offsets(stack.size());
  std::size_t next = first_param;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    offsets[i] = next;
    for_each_param(stack[i], [&](const Tensor&, const char*) { ++next; });
  }
  for (std::size_t i = stack.size(); i-- > 0;) {
    const std::size_t p = offsets[i];
    std::visit(Overloaded{
                   [&](const Conv1DLayer& l) {
                     Conv1DGrads g = conv1d_backward(l, cache_as<Conv1DCache>(caches[i]), grad);
                     grads[p] += g.kernels;
                     grads[p + 1] += g.bias;
                     grad = std::move(g.input);
                   },
                   [&](const MaxPoolLayer& l) {
                     grad = maxpool1d_backward(l, cache_as<MaxPoolCache>(caches[i]), grad);
                   },
                   [&](const ReluLayer&) {
                     grad = relu_backward(cache_as<ReluCache>(caches[i]), grad);
                   },
                   [&](const DenseLayer& l) {
                     DenseGrads g = dense_backward(l, cache_as<DenseCache>(caches[i]), grad);
                     grads[p] += g.weights;
                     grads[p + 1] += g.bias;
                     grad = std::move(g.input);
                   },
                   [&](const LstmLayer& l) {
                     LstmGrads g = lstm_backward(l, cache_as<LstmCache>(caches[i]), grad);
                     grads[p] += g.input_kernel;
                     grads[p + 1] += g.recurrent_kernel;
                     grads[p + 2] += g.bias;
                     grad = std::move(g.input);
                   },
                   [&](const FlattenLayer&) { grad = grad.reshaped(cache_as<Shape>(caches[i])); },
               },
               stack[i]);
  }
  return grad;
}

std::size_t stack_param_count(const std::vector<Layer>& stack) {
  std::size_t n = 0;
  for (const Layer& layer : stack) for_each_param(layer, [&](const Tensor&, const char*) { ++n; });
  return n;
}

const Tensor& checked_input(const Tensor* x, const ModelSpec& spec, const char* modality) {
  const Shape expected{spec.input_len, kSignalChannels};
  if (x->shape() != expected) {
    throw ShapeError(std::string(modality) + " input " + x->shape_string() + " expected " +
                     shape_string(expected));
  }
  return *x;
}

ForwardResult forward_impl(const Model& model, const ModelInput& input, bool keep_trace) {
  const ModelKind kind = model.spec.kind;
  if (kind == ModelKind::fusion && (!input.vibration || !input.acoustic)) {
    throw ConfigError("fusion requires both inputs");
  }
  if (uses_vibration(kind) && !input.vibration) {
    throw ConfigError("vibration model requires a vibration input");
  }
  if (uses_acoustic(kind) && !input.acoustic) {
    throw ConfigError("acoustic model requires an acoustic input");
  }

  ForwardResult result;
  ForwardTrace& trace = result.trace;
  Tensor features;
  if (uses_vibration(kind)) {
    features = run_stack(model.vibration_branch,
                         checked_input(input.vibration, model.spec, "vibration"),
                         keep_trace ? &trace.vibration : nullptr);
    trace.vibration_width = features.size();
  }
  if (uses_acoustic(kind)) {
    Tensor ac = run_stack(model.acoustic_branch,
                          checked_input(input.acoustic, model.spec, "acoustic"),
                          keep_trace ? &trace.acoustic : nullptr);
    trace.acoustic_width = ac.size();
    features = features.empty() ? std::move(ac) : concat(features, ac);
  }
  trace.logits = run_stack(model.head, std::move(features), keep_trace ? &trace.head : nullptr);
  result.probs = softmax(trace.logits);
  return result;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::vibration_cnn:
      return "vibration_cnn";
    case ModelKind::acoustic_cnn_lstm:
      return "acoustic_cnn_lstm";
    case ModelKind::fusion:
      return "fusion";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "vibration_cnn" || text == "vibration") return ModelKind::vibration_cnn;
  if (text == "acoustic_cnn_lstm" || text == "acoustic") return ModelKind::acoustic_cnn_lstm;
  if (text == "fusion") return ModelKind::fusion;
  throw ConfigError("unknown model kind '" + std::string(text) +
                    "' (expected vibration_cnn, acoustic_cnn_lstm or fusion)");
}

bool uses_vibration(ModelKind kind) { return kind != ModelKind::acoustic_cnn_lstm; }
bool uses_acoustic(ModelKind kind) { return kind != ModelKind::vibration_cnn; }

ModelSpec default_spec(ModelKind kind, std::size_t num_classes) {
  ModelSpec spec;
  spec.kind = kind;
  spec.num_classes = num_classes;
  return spec;
}

std::vector<ShapeStep> vibration_shape_chain(const ModelSpec& spec) {
  std::vector<ShapeStep> steps;
  auto [length, channels] = conv_chain("vibration", spec.input_len, spec.vibration_convs, steps);
  steps.push_back({"vibration flatten", {length * channels}});
  return steps;
}

std::vector<ShapeStep> acoustic_shape_chain(const ModelSpec& spec) {
  std::vector<ShapeStep> steps;
  auto [length, channels] = conv_chain("acoustic", spec.input_len, spec.acoustic_convs, steps);
  for (std::size_t i = 0; i < spec.lstm_units.size(); ++i) {
    if (spec.lstm_units[i] == 0) throw ConfigError(ordinal_name("acoustic", "lstm", i) + ": units must be >= 1");
    channels = spec.lstm_units[i];
    steps.push_back({ordinal_name("acoustic", "lstm", i), {length, channels}});
  }
  steps.push_back({"acoustic flatten", {length * channels}});
  return steps;
}

Model build_vibration_model(const ModelSpec& spec, Rng& rng) {
  check_common(spec, ModelKind::vibration_cnn);
  const auto chain = vibration_shape_chain(spec);
  Model model{spec, default_class_names(spec.num_classes), {}, {}, {}};
  model.vibration_branch = build_vibration_branch(spec, rng);
  model.head = build_head(spec, branch_width(chain), rng);
  return model;
}

Model build_acoustic_model(const ModelSpec& spec, Rng& rng) {
  check_common(spec, ModelKind::acoustic_cnn_lstm);
  const auto chain = acoustic_shape_chain(spec);
  Model model{spec, default_class_names(spec.num_classes), {}, {}, {}};
  model.acoustic_branch = build_acoustic_branch(spec, rng);
  model.head = build_head(spec, branch_width(chain), rng);
  return model;
}

Model build_fusion_model(const ModelSpec& spec, Rng& rng) {
  check_common(spec, ModelKind::fusion);
  const std::size_t width =
      branch_width(vibration_shape_chain(spec)) + branch_width(acoustic_shape_chain(spec));
  Model model{spec, default_class_names(spec.num_classes), {}, {}, {}};
  model.vibration_branch = build_vibration_branch(spec, rng);
  model.acoustic_branch = build_acoustic_branch(spec, rng);
  model.head = build_head(spec, width, rng);
  return model;
}

Model build_model(const ModelSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case ModelKind::vibration_cnn:
      return build_vibration_model(spec, rng);
    case ModelKind::acoustic_cnn_lstm:
      return build_acoustic_model(spec, rng);
    case ModelKind::fusion:
      return build_fusion_model(spec, rng);
  }
  throw ConfigError("unknown model kind");
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> params;
  for (auto* stack : {&vibration_branch, &acoustic_branch, &head}) {
    for (Layer& layer : *stack) for_each_param(layer, [&](Tensor& t, const char*) { params.push_back(&t); });
  }
  return params;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<const Tensor*> params;
  for (const auto* stack : {&vibration_branch, &acoustic_branch, &head}) {
    for (const Layer& layer : *stack) {
      for_each_param(layer, [&](const Tensor& t, const char*) { params.push_back(&t); });
    }
  }
  return params;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  const std::pair<const char*, const std::vector<Layer>*> stacks[] = {
      {"vibration", &vibration_branch}, {"acoustic", &acoustic_branch}, {"head", &head}};
  for (const auto& [prefix, stack] : stacks) {
    for (std::size_t i = 0; i < stack->size(); ++i) {
      for_each_param((*stack)[i], [&](const Tensor&, const char* name) {
        names.push_back(std::string(prefix) + "." + std::to_string(i) + "." + name);
      });
    }
  }
  return names;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

ForwardResult model_forward(const Model& model, const ModelInput& input) {
  return forward_impl(model, input, true);
}

Tensor predict(const Model& model, const ModelInput& input) {
  return forward_impl(model, input, false).probs;
}

Gradients zero_gradients(const Model& model) {
  Gradients grads;
  for (const Tensor* t : model.parameters()) grads.emplace_back(t->shape());
  return grads;
}

Gradients model_backward(const Model& model, const ForwardTrace& trace, const Tensor& grad_logits) {
  if (grad_logits.shape() != Shape{model.spec.num_classes}) {
    throw ShapeError("grad_logits " + grad_logits.shape_string() + " expected [" +
                     std::to_string(model.spec.num_classes) + "]");
  }
  Gradients grads = zero_gradients(model);
  const std::size_t vib_params = stack_param_count(model.vibration_branch);
  const std::size_t ac_params = stack_param_count(model.acoustic_branch);

  Tensor grad_features =
      backward_stack(model.head, trace.head, grad_logits, grads, vib_params + ac_params);

  const bool has_vib = !model.vibration_branch.empty();
  const bool has_ac = !model.acoustic_branch.empty();
  if (grad_features.size() != trace.vibration_width + trace.acoustic_width) {
    throw ShapeError("stale forward cache: feature width mismatch");
  }
  if (has_vib) {
    std::vector<double> part(grad_features.values().begin(),
                             grad_features.values().begin() + trace.vibration_width);
    backward_stack(model.vibration_branch, trace.vibration,
                   Tensor({trace.vibration_width}, std::move(part)), grads, 0);
  }
  if (has_ac) {
    std::vector<double> part(grad_features.values().begin() + trace.vibration_width,
                             grad_features.values().end());
    backward_stack(model.acoustic_branch, trace.acoustic,
                   Tensor({trace.acoustic_width}, std::move(part)), grads, vib_params);
  }
  return grads;
}

}  // namespace fdiag
