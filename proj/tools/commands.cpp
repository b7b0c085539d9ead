#include "commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "config.hpp"
#include "fusiondiag/data.hpp"
#include "fusiondiag/errors.hpp"
#include "fusiondiag/metrics.hpp"
#include "fusiondiag/model.hpp"
#include "fusiondiag/synth.hpp"
#include "fusiondiag/training.hpp"

namespace fdiag::cli {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kInitStream = 0x1417;

struct Flags {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  // generate
  std::optional<std::size_t> classes;
  std::optional<std::size_t> windows_per_class;
  std::optional<double> vibration_sigma;
  std::optional<double> acoustic_sigma;
  // train / evaluate
  std::optional<std::string> kind;
  std::optional<std::string> manifest;
  bool synth = false;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<double> split_ratio;
  std::optional<std::string> granularity;
  std::optional<std::uint64_t> split_seed;
  // evaluate / infer
  std::string model_path;
  std::vector<std::string> window_files;
};

CliConfig merged_config(const Flags& flags) {
  CliConfig config;
  if (flags.config_path) apply_config_file(config, *flags.config_path);
  if (flags.out_dir) config.out_dir = *flags.out_dir;
  if (flags.classes) config.synth.num_classes = *flags.classes;
  if (flags.windows_per_class) config.synth.windows_per_class = *flags.windows_per_class;
  if (flags.vibration_sigma) config.synth.vibration_sigma = *flags.vibration_sigma;
  if (flags.acoustic_sigma) config.synth.acoustic_sigma = *flags.acoustic_sigma;
  if (flags.kind) {
    config.model.kind = parse_model_kind(*flags.kind);
    config.kind_set = true;
  }
  if (flags.manifest && flags.synth) throw ConfigError("choose one data source: --manifest or --synth");
  if (flags.manifest) {
    config.source = DataSource::manifest;
    config.manifest = *flags.manifest;
  }
  if (flags.synth) config.source = DataSource::synth;
  if (flags.epochs) config.train.epochs = *flags.epochs;
  if (flags.batch_size) config.train.batch_size = *flags.batch_size;
  if (flags.learning_rate) config.train.adam.learning_rate = *flags.learning_rate;
  if (flags.split_ratio) config.train.split_ratio = *flags.split_ratio;
  if (flags.granularity) config.train.split_granularity = parse_split_granularity(*flags.granularity);
  return config;
}

DatasetMode mode_for(ModelKind kind) {
  switch (kind) {
    case ModelKind::vibration_cnn:
      return DatasetMode::vibration_only;
    case ModelKind::acoustic_cnn_lstm:
      return DatasetMode::acoustic_only;
    case ModelKind::fusion:
      return DatasetMode::paired;
  }
  return DatasetMode::paired;
}

WindowedDataset load_data(const CliConfig& config, ModelKind kind, std::size_t window_len) {
  switch (config.source) {
    case DataSource::synth:
      return synth_dataset(config.synth);
    case DataSource::manifest: {
      if (!fs::exists(config.manifest)) {
        throw DataError("manifest '" + config.manifest.string() + "' does not exist");
      }
      DatasetOptions options;
      options.window_len = window_len;
      options.hop = window_len;
      return build_dataset(load_manifest(config.manifest), mode_for(kind), options);
    }
    case DataSource::none:
      break;
  }
  throw ConfigError("no data source: pass --manifest PATH or --synth (or set [data] in the config)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw DataError("cannot write '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("cannot create output directory '" + dir.string() + "'");
  }
}

std::string file_stem_for(const std::string& class_name) {
  std::string stem;
  for (char ch : class_name) stem += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-') ? ch : '_';
  return stem;
}

std::string config_echo(const CliConfig& config, const Model& model, std::size_t windows) {
  std::ostringstream out;
  out << "[run]\n"
      << "kind " << to_string(model.spec.kind) << '\n'
      << "num_classes " << model.spec.num_classes << '\n'
      << "input_len " << model.spec.input_len << '\n'
      << "vibration_convs " << format_conv_stages(model.spec.vibration_convs) << '\n'
      << "acoustic_convs " << format_conv_stages(model.spec.acoustic_convs) << '\n'
      << "dense_units " << model.spec.dense_units << '\n'
      << "parameters " << model.parameter_count() << '\n'
      << "windows " << windows << '\n'
      << "seed " << config.train.seed << '\n'
      << "split_ratio " << config.train.split_ratio << '\n'
      << "split_granularity " << to_string(config.train.split_granularity) << '\n'
      << "batch_size " << config.train.batch_size << '\n'
      << "epochs " << config.train.epochs << '\n'
      << "learning_rate " << config.train.adam.learning_rate << "\n\n";
  return out.str();
}

void cmd_generate(const Flags& flags, std::ostream& out) {
  CliConfig config = merged_config(flags);
  if (flags.seed) config.synth.seed = *flags.seed;
  const SynthSpec spec = resolved(config.synth);
  ensure_dir(config.out_dir);

  const auto names = default_class_names(spec.num_classes);
  Manifest manifest;
  manifest.class_names = names;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (Modality modality : {Modality::vibration, Modality::acoustic}) {
      Rng rng(synth_noise_seed(spec, c, modality));
      const Recording rec = synth_recording(c, spec, rng, modality);
      const fs::path file = config.out_dir / (std::to_string(c) + "_" + file_stem_for(names[c]) +
                                              "_" + std::string(to_string(modality)) + ".f32");
      write_raw_f32le(file, rec.samples.values());
      manifest.rows.push_back({file, modality, names[c], "class" + std::to_string(c)});
    }
  }
  write_text(config.out_dir / "manifest.csv", render_manifest(manifest, config.out_dir));
  out << "wrote " << manifest.rows.size() << " recordings and manifest.csv to "
      << config.out_dir.string() << '\n';
}

void cmd_train(const Flags& flags, std::ostream& out, std::ostream& err) {
  CliConfig config = merged_config(flags);
  if (!config.kind_set) throw ConfigError("train needs --kind (or [model] kind in --config)");
  if (flags.seed) config.train.seed = *flags.seed;
  config.train.validate();

  const WindowedDataset dataset = load_data(config, config.model.kind, config.model.input_len);
  ModelSpec spec = config.model;
  spec.num_classes = dataset.num_classes();
  Rng init(derive_seed(config.train.seed, kInitStream));
  Model model = build_model(spec, init);
  model.class_names = dataset.class_names;

  const TrainReport report = fit(model, dataset, config.train, [&](const EpochStats& e) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu  loss %.5f  train_acc %.4f  val_acc %.4f\n",
                  e.epoch, e.train_loss, e.train_accuracy, e.validation_accuracy);
    err << line;
  });

  ensure_dir(config.out_dir);
  save_model(model, config.out_dir / "model.fmdl");
  write_text(config.out_dir / "train_report.txt",
             config_echo(config, model, dataset.windows.size()) + render_report(report));
  const ClassMetrics metrics = per_class_metrics(report.confusion);
  const std::string table = render_table(metrics, model.class_names);
  write_text(config.out_dir / "metrics.txt", table);
  write_text(config.out_dir / "metrics.csv", render_csv(metrics, model.class_names));
  out << table << "validation accuracy " << format_percent(metrics.accuracy) << "%\n";
}

void cmd_evaluate(const Flags& flags, std::ostream& out) {
  CliConfig config = merged_config(flags);
  if (flags.seed) config.train.seed = *flags.seed;
  if (flags.split_seed) config.train.seed = *flags.split_seed;
  const Model model = load_model(flags.model_path);
  const WindowedDataset dataset = load_data(config, model.spec.kind, model.spec.input_len);
  if (dataset.num_classes() != model.spec.num_classes) {
    throw DataError("model has " + std::to_string(model.spec.num_classes) +
                    " classes but the data has " + std::to_string(dataset.num_classes()));
  }
  const Split split = stratified_split(dataset, config.train.split_ratio, config.train.seed,
                                       config.train.split_granularity);
  const Evaluation eval = evaluate(model, dataset, split.validation);
  const ClassMetrics metrics = per_class_metrics(eval.confusion);
  const std::string table = render_table(metrics, model.class_names);
  ensure_dir(config.out_dir);
  write_text(config.out_dir / "evaluation.txt", table);
  write_text(config.out_dir / "evaluation.csv", render_csv(metrics, model.class_names));
  out << table << "validation accuracy " << format_percent(metrics.accuracy) << "%\n";
}

void cmd_infer(const Flags& flags, std::ostream& out) {
  const Model model = load_model(flags.model_path);
  const ModelKind kind = model.spec.kind;
  const std::size_t expected = kind == ModelKind::fusion ? 2 : 1;
  if (flags.window_files.size() != expected) {
    throw ConfigError(std::string(to_string(kind)) + " model takes " + std::to_string(expected) +
                      (expected == 2 ? " files (vibration then acoustic)" : " file") + ", got " +
                      std::to_string(flags.window_files.size()));
  }
  std::vector<Tensor> windows;
  for (std::size_t i = 0; i < expected; ++i) {
    const fs::path path = flags.window_files[i];
    const Modality modality = (kind == ModelKind::acoustic_cnn_lstm || i == 1) ? Modality::acoustic
                                                                               : Modality::vibration;
    const Recording rec = load_recording(path, format_for_path(path), {kDefaultSampleRateHz, 0, modality, path.string()});
    windows.push_back(normalize_window(segment(rec, model.spec.input_len, model.spec.input_len).front()));
  }
  ModelInput input;
  if (kind == ModelKind::acoustic_cnn_lstm) {
    input.acoustic = &windows[0];
  } else {
    input.vibration = &windows[0];
    if (kind == ModelKind::fusion) input.acoustic = &windows[1];
  }
  const Tensor probs = predict(model, input);
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  out << "predicted " << model.class_names[best] << '\n';
  for (std::size_t c = 0; c < probs.size(); ++c) {
    char value[32];
    std::snprintf(value, sizeof value, "%.4f", probs[c]);
    out << model.class_names[c] << ' ' << value << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vibration / acoustic fault-diagnosis networks"};
  app.require_subcommand(1);
  Flags flags;

  auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config_path, "INI config file");
    cmd->add_option("--seed", flags.seed, "Random seed");
    cmd->add_option("--out", flags.out_dir, "Output directory");
  };
  auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", flags.manifest, "Recording manifest (CSV)");
    cmd->add_flag("--synth", flags.synth, "Use the in-memory synthetic dataset");
    cmd->add_option("--split-ratio", flags.split_ratio, "Training fraction per class");
    cmd->add_option("--granularity", flags.granularity, "Split unit: window or file");
  };

  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic dataset and manifest");
  add_shared(generate);
  generate->add_option("--classes", flags.classes, "Number of classes");
  generate->add_option("--windows-per-class", flags.windows_per_class, "Windows per class");
  generate->add_option("--vib-sigma", flags.vibration_sigma, "Vibration noise sigma");
  generate->add_option("--ac-sigma", flags.acoustic_sigma, "Acoustic noise sigma");

  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_shared(train);
  add_data(train);
  train->add_option("--kind", flags.kind, "vibration_cnn | acoustic_cnn_lstm | fusion");
  train->add_option("--epochs", flags.epochs, "Training epochs");
  train->add_option("--batch-size", flags.batch_size, "Mini-batch size");
  train->add_option("--lr", flags.learning_rate, "Adam learning rate");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Metrics table on the validation split");
  add_shared(evaluate);
  add_data(evaluate);
  evaluate->add_option("--model", flags.model_path, "Model file")->required();
  evaluate->add_option("--split-seed", flags.split_seed, "Seed of the train/validation split");

  CLI::App* infer = app.add_subcommand("infer", "Classify the first window of a recording");
  add_shared(infer);
  infer->add_option("--model", flags.model_path, "Model file")->required();
  infer->add_option("files", flags.window_files, "Recording file(s); fusion takes vibration then acoustic")
      ->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (generate->parsed()) {
      cmd_generate(flags, out);
    } else if (train->parsed()) {
      cmd_train(flags, out, err);
    } else if (evaluate->parsed()) {
      cmd_evaluate(flags, out);
    } else if (infer->parsed()) {
      cmd_infer(flags, out);
    }
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fdiag::cli
