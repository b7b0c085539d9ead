#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "fusiondiag/errors.hpp"
#include "fusiondiag/model.hpp"

namespace fdiag {

namespace {

constexpr std::string_view kMagic = "FMDL1";

std::string join_stages(const std::vector<ConvStage>& stages) {
  if (stages.empty()) return "-";
  std::string out;
  for (const ConvStage& s : stages) {
    if (!out.empty()) out += ',';
    out += std::to_string(s.channels) + ":" + std::to_string(s.kernel) + ":" +
           std::to_string(s.pool);
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  if (values.empty()) return "-";
  std::string out;
  for (std::size_t v : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(v);
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  if (text == "-" || text.empty()) return parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

std::size_t parse_size(const std::string& text) {
  std::size_t pos = 0;
  unsigned long long value = 0;
  try {
    value = std::stoull(text, &pos);
  } catch (const std::exception&) {
    throw FormatError("bad integer '" + text + "' in model header");
  }
  if (pos != text.size()) throw FormatError("bad integer '" + text + "' in model header");
  return static_cast<std::size_t>(value);
}

std::vector<ConvStage> parse_stages(const std::string& text) {
  std::vector<ConvStage> stages;
  for (const std::string& item : split(text, ',')) {
    const auto fields = split(item, ':');
    if (fields.size() != 3) throw FormatError("bad conv stage '" + item + "' in model header");
    stages.push_back({parse_size(fields[0]), parse_size(fields[1]), parse_size(fields[2])});
  }
  return stages;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> values;
  for (const std::string& item : split(text, ',')) values.push_back(parse_size(item));
  return values;
}

// Reads "key value" and checks the key.
std::string expect_field(std::istream& in, std::string_view key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("truncated model header (missing " + std::string(key) + ")");
  const auto space = line.find(' ');
  if (line.substr(0, space) != key || space == std::string::npos) {
    throw FormatError("expected header field '" + std::string(key) + "', got '" + line + "'");
  }
  return line.substr(space + 1);
}

void write_f64_le(std::ostream& out, double value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  for (const std::string& name : model.class_names) {
    if (name.empty() || name.find_first_of(",\n\r") != std::string::npos) {
      throw ConfigError("class name '" + name + "' cannot be stored (empty, comma or newline)");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");

  const ModelSpec& spec = model.spec;
  out << kMagic << '\n';
  out << "kind " << to_string(spec.kind) << '\n';
  out << "num_classes " << spec.num_classes << '\n';
  out << "input_len " << spec.input_len << '\n';
  out << "vibration_convs " << join_stages(spec.vibration_convs) << '\n';
  out << "acoustic_convs " << join_stages(spec.acoustic_convs) << '\n';
  out << "lstm_units " << join_sizes(spec.lstm_units) << '\n';
  out << "dense_units " << spec.dense_units << '\n';
  std::string names;
  for (const std::string& name : model.class_names) names += (names.empty() ? "" : ",") + name;
  out << "class_names " << names << '\n';

  const auto params = model.parameters();
  const auto param_names = model.parameter_names();
  out << "tensors " << params.size() << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) {
    out << "tensor " << param_names[i] << ' ' << join_sizes(params[i]->shape()) << '\n';
  }
  out << "end\n";
  for (const Tensor* t : params) {
    for (double v : t->values()) write_f64_le(out, v);
  }
  if (!out) throw DataError("failed writing model file '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw FormatError("bad magic in '" + path.string() + "'");

  ModelSpec spec;
  spec.kind = parse_model_kind(expect_field(in, "kind"));
  spec.num_classes = parse_size(expect_field(in, "num_classes"));
  spec.input_len = parse_size(expect_field(in, "input_len"));
  spec.vibration_convs = parse_stages(expect_field(in, "vibration_convs"));
  spec.acoustic_convs = parse_stages(expect_field(in, "acoustic_convs"));
  spec.lstm_units = parse_sizes(expect_field(in, "lstm_units"));
  spec.dense_units = parse_size(expect_field(in, "dense_units"));
  std::vector<std::string> class_names = split(expect_field(in, "class_names"), ',');
  if (class_names.size() != spec.num_classes) {
    throw FormatError("class_names lists " + std::to_string(class_names.size()) +
                      " names for " + std::to_string(spec.num_classes) + " classes");
  }

  Model model;
  try {
    Rng scratch(0);
    model = build_model(spec, scratch);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model header describes an invalid network: ") + e.what());
  }
  model.class_names = std::move(class_names);

  auto params = model.parameters();
  const auto param_names = model.parameter_names();
  if (parse_size(expect_field(in, "tensors")) != params.size()) {
    throw FormatError("tensor count in manifest does not match the described network");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string entry = expect_field(in, "tensor");
    const auto space = entry.find(' ');
    const std::string name = entry.substr(0, space);
    const Shape shape = space == std::string::npos ? Shape{} : parse_sizes(entry.substr(space + 1));
    if (name != param_names[i] || shape != params[i]->shape()) {
      throw FormatError("manifest entry '" + entry + "' does not match expected " +
                        param_names[i] + " " + params[i]->shape_string());
    }
  }
  if (!std::getline(in, line) || line != "end") throw FormatError("missing end of model header");

  for (Tensor* t : params) {
    for (double& v : t->values()) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw FormatError("truncated model file '" + path.string() + "'");
      }
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[b]} << (8 * b);
      v = std::bit_cast<double>(bits);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after parameter blobs in '" + path.string() + "'");
  }
  return model;
}

}  // namespace fdiag
