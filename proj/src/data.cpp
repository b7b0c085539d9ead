#include "fusiondiag/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "fusiondiag/errors.hpp"

namespace fdiag {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view text, double& value) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<double> parse_csv_samples(const std::string& text, const std::string& name) {
  std::vector<double> samples;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view field = trim(line);
    if (field.empty()) continue;
    double value = 0.0;
    if (!parse_double(field, value)) {
      if (!seen_content) {
        seen_content = true;  // header
        continue;
      }
      throw DataError(name + ": unparseable value '" + std::string(field) + "' at line " +
                      std::to_string(line_no));
    }
    seen_content = true;
    if (!std::isfinite(value)) {
      throw DataError(name + ": non-finite value at line " + std::to_string(line_no));
    }
    samples.push_back(value);
  }
  return samples;
}

std::vector<double> parse_raw_samples(const std::string& bytes, const std::string& name) {
  if (bytes.size() % 4 != 0) {
    throw DataError(name + ": raw binary32 file size " + std::to_string(bytes.size()) +
                    " is not a multiple of 4");
  }
  std::vector<double> samples(bytes.size() / 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= std::uint32_t{static_cast<unsigned char>(bytes[4 * i + b])} << (8 * b);
    }
    const double value = std::bit_cast<float>(bits);
    if (!std::isfinite(value)) {
      throw DataError(name + ": non-finite value at sample " + std::to_string(i));
    }
    samples[i] = value;
  }
  return samples;
}

std::string source_id_for(const ManifestRow& row) {
  return row.pair_key.empty() ? row.file_path.string() : row.pair_key;
}

std::size_t label_index(const Manifest& manifest, const std::string& label) {
  const auto it = std::find(manifest.class_names.begin(), manifest.class_names.end(), label);
  if (it == manifest.class_names.end()) {
    throw DataError("label '" + label + "' is not in the class table");
  }
  return static_cast<std::size_t>(it - manifest.class_names.begin());
}

Recording load_row(const ManifestRow& row, const Manifest& manifest, const DatasetOptions& options) {
  RecordingMeta meta{options.sample_rate_hz, label_index(manifest, row.label_name), row.modality,
                     source_id_for(row)};
  return load_recording(row.file_path, format_for_path(row.file_path), meta);
}

}  // namespace

std::string_view to_string(Modality modality) {
  return modality == Modality::vibration ? "vibration" : "acoustic";
}

Modality parse_modality(std::string_view text) {
  if (text == "vibration") return Modality::vibration;
  if (text == "acoustic") return Modality::acoustic;
  throw DataError("unknown modality '" + std::string(text) + "' (expected vibration or acoustic)");
}

std::string_view to_string(DatasetMode mode) {
  switch (mode) {
    case DatasetMode::vibration_only:
      return "vibration_only";
    case DatasetMode::acoustic_only:
      return "acoustic_only";
    case DatasetMode::paired:
      return "paired";
  }
  return "unknown";
}

std::vector<std::string> default_class_names(std::size_t num_classes) {
  if (num_classes == 9) {
    return {"Healthy", "Inner-1", "Inner-2", "Outer-1", "Outer-2",
            "Ball-1",  "Ball-2",  "Cage-1",  "Cage-2"};
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) names.push_back("Class " + std::to_string(c + 1));
  return names;
}

SampleFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? SampleFormat::csv : SampleFormat::raw_f32le;
}

Recording load_recording(const std::filesystem::path& path, SampleFormat format,
                         const RecordingMeta& meta) {
  if (!(meta.sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  const std::string bytes = read_file(path);
  const std::string name = path.string();
  std::vector<double> samples = format == SampleFormat::csv ? parse_csv_samples(bytes, name)
                                                            : parse_raw_samples(bytes, name);
  if (samples.empty()) throw DataError(name + ": no samples");
  const std::size_t n = samples.size();
  return Recording{Tensor({n}, std::move(samples)), meta.sample_rate_hz, meta.label,
                   meta.modality, meta.source_id.empty() ? name : meta.source_id};
}

void write_raw_f32le(const std::filesystem::path& path, std::span<const double> samples) {
  std::string bytes(samples.size() * 4, '\0');
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(samples[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError("cannot write '" + path.string() + "'");
  }
}

std::size_t window_count(std::size_t num_samples, std::size_t window_len, std::size_t hop) {
  if (window_len == 0 || hop == 0) throw ConfigError("window length and hop must be >= 1");
  if (num_samples < window_len) return 0;
  return (num_samples - window_len) / hop + 1;
}

std::vector<Tensor> segment(const Recording& recording, std::size_t window_len, std::size_t hop) {
  const std::size_t n = recording.samples.size();
  if (n < window_len) {
    throw DataError(recording.source_id + ": " + std::to_string(n) +
                    " samples is shorter than one window of " + std::to_string(window_len));
  }
  const std::size_t count = window_count(n, window_len, hop);
  std::vector<Tensor> windows;
  windows.reserve(count);
  const double* src = recording.samples.data();
  for (std::size_t w = 0; w < count; ++w) {
    windows.emplace_back(Shape{window_len, 1},
                         std::vector<double>(src + w * hop, src + w * hop + window_len));
  }
  return windows;
}

Tensor normalize_window(const Tensor& window) {
  const double n = static_cast<double>(window.size());
  double mean = 0.0;
  for (double v : window.values()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : window.values()) var += (v - mean) * (v - mean);
  const double scale = std::max(std::sqrt(var / n), 1e-8);
  Tensor out = window;
  const auto values = window.values();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  // Summation rounding leaves a constant window slightly off its own mean.
  if (*lo == *hi) {
    out.fill(0.0);
    return out;
  }
  for (double& v : out.values()) v = (v - mean) / scale;
  return out;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  Manifest manifest;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.emplace_back(trim(field));
    if (manifest.rows.empty() && !fields.empty() && fields[0] == "file_path") continue;
    if (fields.size() < 3 || fields.size() > 4) {
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": expected file_path,modality,label_name,pair_key");
    }
    ManifestRow row;
    row.file_path = std::filesystem::path(fields[0]);
    if (row.file_path.is_relative()) row.file_path = base_dir / row.file_path;
    row.modality = parse_modality(fields[1]);
    row.label_name = fields[2];
    if (row.label_name.empty()) {
      throw DataError("manifest line " + std::to_string(line_no) + ": empty label");
    }
    row.pair_key = fields.size() == 4 ? fields[3] : std::string();
    if (std::find(manifest.class_names.begin(), manifest.class_names.end(), row.label_name) ==
        manifest.class_names.end()) {
      manifest.class_names.push_back(row.label_name);
    }
    manifest.rows.push_back(std::move(row));
  }
  if (manifest.rows.empty()) throw DataError("manifest has no rows");
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

std::string render_manifest(const Manifest& manifest, const std::filesystem::path& base_dir) {
  std::ostringstream out;
  out << "file_path,modality,label_name,pair_key\n";
  for (const ManifestRow& row : manifest.rows) {
    out << row.file_path.lexically_relative(base_dir).generic_string() << ','
        << to_string(row.modality) << ',' << row.label_name << ',' << row.pair_key << '\n';
  }
  return out.str();
}

WindowedDataset build_dataset(const Manifest& manifest, DatasetMode mode,
                              const DatasetOptions& options) {
  WindowedDataset ds;
  ds.class_names = manifest.class_names;
  ds.mode = mode;
  ds.window_len = options.window_len;

  auto add_windows = [&](const Recording* vib, const Recording* ac) {
    const Recording& ref = vib ? *vib : *ac;
    const auto vib_windows = vib ? segment(*vib, options.window_len, options.hop) : std::vector<Tensor>{};
    const auto ac_windows = ac ? segment(*ac, options.window_len, options.hop) : std::vector<Tensor>{};
    const std::size_t count = vib ? vib_windows.size() : ac_windows.size();
    for (std::size_t w = 0; w < count; ++w) {
      Window window;
      if (vib) window.vibration = normalize_window(vib_windows[w]);
      if (ac) window.acoustic = normalize_window(ac_windows[w]);
      window.label = ref.label;
      window.source_id = ref.source_id;
      ds.windows.push_back(std::move(window));
    }
  };

  if (mode != DatasetMode::paired) {
    const Modality wanted =
        mode == DatasetMode::vibration_only ? Modality::vibration : Modality::acoustic;
    for (const ManifestRow& row : manifest.rows) {
      if (row.modality != wanted) continue;
      const Recording rec = load_row(row, manifest, options);
      add_windows(wanted == Modality::vibration ? &rec : nullptr,
                  wanted == Modality::acoustic ? &rec : nullptr);
    }
    if (ds.windows.empty()) {
      throw DataError("manifest has no " + std::string(to_string(wanted)) + " recordings");
    }
    return ds;
  }

  // Paired: group rows by pair_key in first-appearance order.
  std::vector<std::string> keys;
  std::map<std::string, std::pair<const ManifestRow*, const ManifestRow*>> pairs;
  for (const ManifestRow& row : manifest.rows) {
    if (row.pair_key.empty()) {
      throw DataError("paired mode: row for '" + row.file_path.string() + "' has no pair_key");
    }
    auto [it, inserted] = pairs.try_emplace(row.pair_key, nullptr, nullptr);
    if (inserted) keys.push_back(row.pair_key);
    const ManifestRow*& slot =
        row.modality == Modality::vibration ? it->second.first : it->second.second;
    if (slot) {
      throw DataError("pair_key '" + row.pair_key + "' has more than one " +
                      std::string(to_string(row.modality)) + " recording");
    }
    slot = &row;
  }
  for (const std::string& key : keys) {
    const auto [vib_row, ac_row] = pairs.at(key);
    if (!vib_row) throw DataError("pair_key '" + key + "' is missing its vibration recording");
    if (!ac_row) throw DataError("pair_key '" + key + "' is missing its acoustic recording");
    if (vib_row->label_name != ac_row->label_name) {
      throw DataError("pair_key '" + key + "' mixes labels '" + vib_row->label_name + "' and '" +
                      ac_row->label_name + "'");
    }
    const Recording vib = load_row(*vib_row, manifest, options);
    const Recording ac = load_row(*ac_row, manifest, options);
    if (vib.samples.size() != ac.samples.size()) {
      throw DataError("pair_key '" + key + "': vibration has " +
                      std::to_string(vib.samples.size()) + " samples, acoustic has " +
                      std::to_string(ac.samples.size()));
    }
    add_windows(&vib, &ac);
  }
  return ds;
}

}  // namespace fdiag
