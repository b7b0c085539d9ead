#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "fusiondiag/errors.hpp"

namespace fdiag::cli {

namespace {

namespace pt = boost::property_tree;

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

double to_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return value;
}

using Setter = std::function<void(CliConfig&, const std::string& key, const std::string& value,
                                  const std::filesystem::path& base)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.kind",
       [](CliConfig& c, auto&, auto& v, auto&) {
         c.model.kind = parse_model_kind(v);
         c.kind_set = true;
       }},
      {"model.input_len", [](CliConfig& c, auto& k, auto& v, auto&) { c.model.input_len = to_u64(k, v); }},
      {"model.vibration_convs", [](CliConfig& c, auto&, auto& v, auto&) { c.model.vibration_convs = parse_conv_stages(v); }},
      {"model.acoustic_convs", [](CliConfig& c, auto&, auto& v, auto&) { c.model.acoustic_convs = parse_conv_stages(v); }},
      {"model.lstm_units", [](CliConfig& c, auto&, auto& v, auto&) { c.model.lstm_units = parse_size_list(v); }},
      {"model.dense_units", [](CliConfig& c, auto& k, auto& v, auto&) { c.model.dense_units = to_u64(k, v); }},
      {"train.seed", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.seed = to_u64(k, v); }},
      {"train.split_ratio", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.split_ratio = to_double(k, v); }},
      {"train.batch_size", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.batch_size = to_u64(k, v); }},
      {"train.epochs", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.epochs = to_u64(k, v); }},
      {"train.learning_rate", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.adam.learning_rate = to_double(k, v); }},
      {"train.beta1", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.adam.beta1 = to_double(k, v); }},
      {"train.beta2", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.adam.beta2 = to_double(k, v); }},
      {"train.epsilon", [](CliConfig& c, auto& k, auto& v, auto&) { c.train.adam.epsilon = to_double(k, v); }},
      {"train.split_granularity", [](CliConfig& c, auto&, auto& v, auto&) { c.train.split_granularity = parse_split_granularity(v); }},
      {"synth.num_classes", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.num_classes = to_u64(k, v); }},
      {"synth.windows_per_class", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.windows_per_class = to_u64(k, v); }},
      {"synth.window_len", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.window_len = to_u64(k, v); }},
      {"synth.seed", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.seed = to_u64(k, v); }},
      {"synth.sample_rate_hz", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.sample_rate_hz = to_double(k, v); }},
      {"synth.vibration_sigma", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.vibration_sigma = to_double(k, v); }},
      {"synth.acoustic_sigma", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.acoustic_sigma = to_double(k, v); }},
      {"synth.decay_s", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.decay_s = to_double(k, v); }},
      {"synth.timing_jitter", [](CliConfig& c, auto& k, auto& v, auto&) { c.synth.timing_jitter = to_double(k, v); }},
      {"data.source",
       [](CliConfig& c, auto& k, auto& v, auto&) {
         if (v == "synth") {
           c.source = DataSource::synth;
         } else if (v == "manifest") {
           c.source = DataSource::manifest;
         } else {
           throw ConfigError(k + ": expected synth or manifest, got '" + v + "'");
         }
       }},
      {"data.manifest",
       [](CliConfig& c, auto&, auto& v, auto& base) {
         c.manifest = std::filesystem::path(v).is_relative() ? base / v : std::filesystem::path(v);
         if (c.source == DataSource::none) c.source = DataSource::manifest;
       }},
      {"output.dir",
       [](CliConfig& c, auto&, auto& v, auto& base) {
         c.out_dir = std::filesystem::path(v).is_relative() ? base / v : std::filesystem::path(v);
       }},
  };
  return table;
}

}  // namespace

std::vector<ConvStage> parse_conv_stages(const std::string& text) {
  std::vector<ConvStage> stages;
  if (text.empty() || text == "-") return stages;
  std::stringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    std::stringstream fields(item);
    std::string a, b, c;
    if (!std::getline(fields, a, ':') || !std::getline(fields, b, ':') || !std::getline(fields, c)) {
      throw ConfigError("conv stage '" + item + "' must be channels:kernel:pool");
    }
    stages.push_back({to_u64("conv channels", a), to_u64("conv kernel", b), to_u64("conv pool", c)});
  }
  return stages;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> values;
  if (text.empty() || text == "-") return values;
  std::stringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) values.push_back(to_u64("list entry", item));
  return values;
}

std::string format_conv_stages(const std::vector<ConvStage>& stages) {
  std::string out;
  for (const ConvStage& s : stages) {
    if (!out.empty()) out += ',';
    out += std::to_string(s.channels) + ":" + std::to_string(s.kernel) + ":" + std::to_string(s.pool);
  }
  return out.empty() ? "-" : out;
}

void apply_config_file(CliConfig& config, const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config file: " + std::string(e.what()));
  }
  const std::filesystem::path base = path.parent_path();
  for (const auto& [section, keys] : tree) {
    if (keys.empty()) throw ConfigError("config file: key '" + section + "' outside a section");
    for (const auto& [key, node] : keys) {
      const std::string full = section + "." + key;
      const auto it = setters().find(full);
      if (it == setters().end()) throw ConfigError("config file: unknown key '" + full + "'");
      it->second(config, full, node.get_value<std::string>(), base);
    }
  }
}

}  // namespace fdiag::cli
