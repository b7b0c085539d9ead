#include "fusiondiag/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "fusiondiag/errors.hpp"

namespace fdiag {

namespace {

constexpr std::uint64_t kSplitStream = 0x5b17;
constexpr std::uint64_t kShuffleStream = 0x5ff1;
constexpr double kProbFloor = 1e-12;

void shuffle(std::vector<std::size_t>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.values().begin(), t.values().end()) -
                                  t.values().begin());
}

void check_compatible(const Model& model, const WindowedDataset& dataset) {
  const ModelKind kind = model.spec.kind;
  if (uses_vibration(kind) && !dataset.has_vibration()) {
    throw DataError(std::string(to_string(kind)) + " needs vibration windows but the dataset is " +
                    std::string(to_string(dataset.mode)));
  }
  if (uses_acoustic(kind) && !dataset.has_acoustic()) {
    throw DataError(std::string(to_string(kind)) + " needs acoustic windows but the dataset is " +
                    std::string(to_string(dataset.mode)));
  }
  if (dataset.num_classes() != model.spec.num_classes) {
    throw DataError("model has " + std::to_string(model.spec.num_classes) +
                    " classes but the dataset has " + std::to_string(dataset.num_classes()));
  }
  if (dataset.window_len != model.spec.input_len) {
    throw DataError("model input_len " + std::to_string(model.spec.input_len) +
                    " does not match dataset window length " + std::to_string(dataset.window_len));
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(SplitGranularity granularity) {
  return granularity == SplitGranularity::window ? "window" : "file";
}

SplitGranularity parse_split_granularity(std::string_view text) {
  if (text == "window") return SplitGranularity::window;
  if (text == "file") return SplitGranularity::file;
  throw ConfigError("unknown split granularity '" + std::string(text) + "' (expected window or file)");
}

void TrainConfig::validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

OptimizerState make_optimizer_state(const Model& model) {
  OptimizerState state;
  state.first_moment = zero_gradients(model);
  state.second_moment = zero_gradients(model);
  return state;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, const AdamConfig& config) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (state.first_moment.empty() && state.step == 0) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam: optimizer state does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->shape() || state.first_moment[i].shape() != params[i]->shape()) {
      throw ShapeError("adam: shape mismatch at parameter " + std::to_string(i) + ": " +
                       params[i]->shape_string() + " vs grad " + grads[i].shape_string());
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    double* m = state.first_moment[i].data();
    double* v = state.second_moment[i].data();
    const double* g = grads[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void apply_gradients(Model& model, const Gradients& grads, OptimizerState& state,
                     const AdamConfig& config) {
  const auto params = model.parameters();
  adam_step(params, grads, state, config);
}

LossResult cross_entropy(const Tensor& probs, std::size_t true_class) {
  if (probs.rank() != 1) throw ShapeError("cross_entropy expects a probability vector");
  if (true_class >= probs.size()) {
    throw ConfigError("true class " + std::to_string(true_class) + " out of range for " +
                      std::to_string(probs.size()) + " classes");
  }
  LossResult out{-std::log(std::max(probs[true_class], kProbFloor)), probs};
  out.grad_logits[true_class] -= 1.0;
  return out;
}

Split stratified_split(const WindowedDataset& dataset, double ratio, std::uint64_t seed,
                       SplitGranularity granularity) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  if (dataset.windows.empty()) throw DataError("cannot split an empty dataset");

  // Units per class, each a list of window indices, in first-appearance order.
  std::vector<std::vector<std::vector<std::size_t>>> units(dataset.num_classes());
  std::vector<std::map<std::string, std::size_t>> unit_of_source(dataset.num_classes());
  for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
    const Window& w = dataset.windows[i];
    if (w.label >= dataset.num_classes()) throw DataError("window label out of range");
    auto& class_units = units[w.label];
    if (granularity == SplitGranularity::window) {
      class_units.push_back({i});
      continue;
    }
    auto [it, inserted] = unit_of_source[w.label].try_emplace(w.source_id, class_units.size());
    if (inserted) class_units.emplace_back();
    class_units[it->second].push_back(i);
  }

  Rng rng(derive_seed(seed, kSplitStream));
  Split split;
  for (std::size_t c = 0; c < units.size(); ++c) {
    const std::size_t n = units[c].size();
    if (n < 2) {
      throw DataError("class '" + dataset.class_names[c] + "' has " + std::to_string(n) + " " +
                      std::string(to_string(granularity)) + "-level units; need at least 2");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t u = 0; u < n; ++u) order[u] = u;
    shuffle(order, rng);
    const auto wanted = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
    const std::size_t n_train = std::min(wanted, n - 1);
    for (std::size_t k = 0; k < n; ++k) {
      auto& side = k < n_train ? split.train : split.validation;
      side.insert(side.end(), units[c][order[k]].begin(), units[c][order[k]].end());
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

ModelInput input_for(const Model& model, const Window& window) {
  ModelInput input;
  if (uses_vibration(model.spec.kind)) input.vibration = &window.vibration;
  if (uses_acoustic(model.spec.kind)) input.acoustic = &window.acoustic;
  return input;
}

Evaluation evaluate(const Model& model, const WindowedDataset& dataset,
                    std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("cannot evaluate on an empty index set");
  check_compatible(model, dataset);
  Evaluation eval{0.0, ConfusionMatrix(model.spec.num_classes)};
  for (std::size_t idx : indices) {
    if (idx >= dataset.windows.size()) throw DataError("window index out of range");
    const Window& w = dataset.windows[idx];
    eval.confusion.add(w.label, argmax(predict(model, input_for(model, w))));
  }
  eval.accuracy = static_cast<double>(eval.confusion.trace()) /
                  static_cast<double>(eval.confusion.total());
  return eval;
}

TrainReport fit(Model& model, const WindowedDataset& dataset, const TrainConfig& config,
                const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.windows.empty()) throw DataError("empty dataset");
  check_compatible(model, dataset);

  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.split = stratified_split(dataset, config.split_ratio, config.seed, config.split_granularity);
  if (report.split.train.empty()) throw DataError("training split is empty");

  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  OptimizerState optimizer = make_optimizer_state(model);
  std::vector<std::size_t> order = report.split.train;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Gradients batch = zero_gradients(model);
      for (std::size_t k = begin; k < end; ++k) {
        const Window& w = dataset.windows[order[k]];
        ForwardResult fwd = model_forward(model, input_for(model, w));
        LossResult loss = cross_entropy(fwd.probs, w.label);
        if (!std::isfinite(loss.loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        }
        loss_sum += loss.loss;
        if (argmax(fwd.probs) == w.label) ++correct;
        Gradients g = model_backward(model, fwd.trace, loss.grad_logits);
        for (std::size_t p = 0; p < batch.size(); ++p) batch[p] += g[p];
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (Tensor& g : batch) {
        g *= scale;
        if (!g.all_finite()) throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
      }
      apply_gradients(model, batch, optimizer, config.adam);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!report.split.validation.empty()) {
      Evaluation eval = evaluate(model, dataset, report.split.validation);
      stats.validation_accuracy = eval.accuracy;
      report.confusion = std::move(eval.confusion);
    }
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string render_report(const TrainReport& report) {
  std::ostringstream out;
  out << "epoch,train_loss,train_accuracy,validation_accuracy\n";
  for (const EpochStats& e : report.epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_accuracy)
        << ',' << format_double(e.validation_accuracy) << '\n';
  }
  out << "\n[timing]\nwall_seconds " << format_double(report.wall_seconds) << '\n';
  return out.str();
}

}  // namespace fdiag
