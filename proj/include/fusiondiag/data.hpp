#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusiondiag/tensor.hpp"

namespace fdiag {

enum class Modality { vibration, acoustic };
enum class SampleFormat { csv, raw_f32le };
enum class DatasetMode { vibration_only, acoustic_only, paired };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view text);
std::string_view to_string(DatasetMode mode);

inline constexpr double kDefaultSampleRateHz = 42000.0;
inline constexpr std::size_t kDefaultWindowLen = 1000;

struct Recording {
  Tensor samples;  // [N]
  double sample_rate_hz = kDefaultSampleRateHz;
  std::size_t label = 0;
  Modality modality = Modality::vibration;
  std::string source_id;
};

struct RecordingMeta {
  double sample_rate_hz = kDefaultSampleRateHz;
  std::size_t label = 0;
  Modality modality = Modality::vibration;
  std::string source_id;
};

// Table II naming for 9 classes, "Class 1".."Class C" otherwise.
std::vector<std::string> default_class_names(std::size_t num_classes);

// .csv -> csv, anything else -> raw_f32le.
SampleFormat format_for_path(const std::filesystem::path& path);

// csv: one value per line, a non-numeric first line is skipped as a header.
// raw_f32le: headerless little-endian binary32 stream.
Recording load_recording(const std::filesystem::path& path, SampleFormat format,
                         const RecordingMeta& meta);
void write_raw_f32le(const std::filesystem::path& path, std::span<const double> samples);

// floor((N - window_len) / hop) + 1 consecutive windows of shape [window_len, 1].
std::vector<Tensor> segment(const Recording& recording, std::size_t window_len = kDefaultWindowLen,
                            std::size_t hop = kDefaultWindowLen);
std::size_t window_count(std::size_t num_samples, std::size_t window_len, std::size_t hop);

// Per-window z-score: (w - mean) / max(std, 1e-8).
Tensor normalize_window(const Tensor& window);

struct Window {
  Tensor vibration;  // [window_len, 1]; empty when absent
  Tensor acoustic;   // [window_len, 1]; empty when absent
  std::size_t label = 0;
  std::string source_id;
};

struct WindowedDataset {
  std::vector<Window> windows;
  std::vector<std::string> class_names;
  DatasetMode mode = DatasetMode::paired;
  std::size_t window_len = kDefaultWindowLen;

  std::size_t num_classes() const { return class_names.size(); }
  bool has_vibration() const { return mode != DatasetMode::acoustic_only; }
  bool has_acoustic() const { return mode != DatasetMode::vibration_only; }
};

struct ManifestRow {
  std::filesystem::path file_path;  // resolved against the manifest directory
  Modality modality = Modality::vibration;
  std::string label_name;
  std::string pair_key;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> class_names;  // first-appearance order
};

// Comma-separated: file_path, modality, label_name, pair_key. An optional
// header line starting with "file_path" is skipped.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
Manifest load_manifest(const std::filesystem::path& path);
std::string render_manifest(const Manifest& manifest, const std::filesystem::path& base_dir);

struct DatasetOptions {
  std::size_t window_len = kDefaultWindowLen;
  std::size_t hop = kDefaultWindowLen;
  double sample_rate_hz = kDefaultSampleRateHz;
};

WindowedDataset build_dataset(const Manifest& manifest, DatasetMode mode,
                              const DatasetOptions& options = {});

}  // namespace fdiag
