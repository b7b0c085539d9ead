#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fusiondiag/errors.hpp"
#include "fusiondiag/data.hpp"
#include "fusiondiag/synth.hpp"

namespace fdiag {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fdiag_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

Recording make_recording(std::size_t n) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  return Recording{Tensor({n}, std::move(v)), kDefaultSampleRateHz, 0, Modality::vibration, "ramp"};
}

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s / static_cast<double>(t.size());
}

double std_of(const Tensor& t) {
  const double m = mean_of(t);
  double s = 0.0;
  for (double v : t.values()) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(t.size()));
}

// ------------------------------------------------------------ Recordings

TEST(LoadRecording, CsvWithHeader) {
  const fs::path dir = scratch_dir("csv");
  write_text(dir / "a.csv", "amplitude\n1.5\n-2\n3e-1\n");
  const Recording r = load_recording(dir / "a.csv", SampleFormat::csv, {});
  EXPECT_EQ(r.samples, Tensor::vector({1.5, -2.0, 0.3}));
}

TEST(LoadRecording, CsvBadLineReportsLineNumber) {
  const fs::path dir = scratch_dir("csvbad");
  write_text(dir / "a.csv", "1\n2\nabc\n");
  try {
    load_recording(dir / "a.csv", SampleFormat::csv, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadRecording, EmptyAndNonFinite) {
  const fs::path dir = scratch_dir("csvempty");
  write_text(dir / "empty.csv", "");
  write_text(dir / "nan.csv", "1\nnan\n");
  EXPECT_THROW(load_recording(dir / "empty.csv", SampleFormat::csv, {}), DataError);
  EXPECT_THROW(load_recording(dir / "nan.csv", SampleFormat::csv, {}), DataError);
  EXPECT_THROW(load_recording(dir / "missing.csv", SampleFormat::csv, {}), DataError);
}

TEST(LoadRecording, RawLittleEndianFloats) {
  const fs::path dir = scratch_dir("raw");
  const unsigned char bytes[12] = {0x00, 0x00, 0x80, 0x3f,   // 1.0f
                                   0x00, 0x00, 0x00, 0xc0,   // -2.0f
                                   0x00, 0x00, 0x00, 0x3f};  // 0.5f
  std::ofstream(dir / "a.f32", std::ios::binary).write(reinterpret_cast<const char*>(bytes), 12);
  const Recording r = load_recording(dir / "a.f32", SampleFormat::raw_f32le, {});
  EXPECT_EQ(r.samples, Tensor::vector({1.0, -2.0, 0.5}));
}

TEST(LoadRecording, RawSizeNotMultipleOfFour) {
  const fs::path dir = scratch_dir("rawbad");
  std::ofstream(dir / "a.f32", std::ios::binary) << "abcdef";
  EXPECT_THROW(load_recording(dir / "a.f32", SampleFormat::raw_f32le, {}), DataError);
}

TEST(LoadRecording, RawRoundTrip) {
  const fs::path dir = scratch_dir("rawrt");
  const std::vector<double> values{0.25, -1.5, 1024.0, 3.0};
  write_raw_f32le(dir / "a.f32", values);
  const Recording r = load_recording(dir / "a.f32", format_for_path(dir / "a.f32"), {});
  EXPECT_EQ(r.samples, Tensor({values.size()}, values));
  EXPECT_EQ(format_for_path("x.csv"), SampleFormat::csv);
}

// ------------------------------------------------------------ Segmentation

TEST(Segment, WindowCounts) {
  EXPECT_EQ(segment(make_recording(420000)).size(), 420u);
  EXPECT_EQ(segment(make_recording(1000)).size(), 1u);
  EXPECT_EQ(segment(make_recording(1999)).size(), 1u);
  EXPECT_EQ(window_count(420000, 1000, 1000), 420u);
  EXPECT_EQ(window_count(1000, 100, 50), 19u);
}

TEST(Segment, ShortRecordingIsAnError) {
  try {
    segment(make_recording(999));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ramp"), std::string::npos);
  }
  EXPECT_THROW(segment(make_recording(10), 0, 1), ConfigError);
}

TEST(Segment, ConcatenationReconstructsPrefix) {
  const Recording r = make_recording(5321);
  const auto windows = segment(r, 1000, 1000);
  ASSERT_EQ(windows.size(), 5u);
  std::size_t i = 0;
  for (const Tensor& w : windows) {
    EXPECT_EQ(w.shape(), (Shape{1000, 1}));
    for (double v : w.values()) EXPECT_EQ(v, r.samples[i++]);
  }
}

TEST(Segment, HopProducesOverlap) {
  const auto windows = segment(make_recording(3000), 1000, 500);
  ASSERT_EQ(windows.size(), 5u);
  EXPECT_EQ(windows[1][0], 500.0);
}

TEST(NormalizeWindow, ZeroMeanUnitStd) {
  Rng rng = rng_new(5);
  Tensor w({1000, 1});
  for (double& v : w.values()) v = 3.0 + 7.0 * rng.normal();
  const Tensor z = normalize_window(w);
  EXPECT_NEAR(mean_of(z), 0.0, 1e-12);
  EXPECT_NEAR(std_of(z), 1.0, 1e-12);
  Tensor scaled = w;
  for (double& v : scaled.values()) v = -4.0 + 2.5 * v;
  const Tensor zs = normalize_window(scaled);
  const Tensor again = normalize_window(z);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_NEAR(zs[i], z[i], 1e-12);
    EXPECT_NEAR(again[i], z[i], 1e-12);
  }
}

TEST(NormalizeWindow, ConstantWindowBecomesZeros) {
  const Tensor z = normalize_window(Tensor({1000, 1}, 4.2));
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

// ------------------------------------------------------------ Manifests

TEST(Manifest, ParsesRowsAndClassOrder) {
  const Manifest m = parse_manifest(
      "file_path,modality,label_name,pair_key\n"
      "b.csv,vibration,Outer,p1\n"
      "a.csv,acoustic,Outer,p1\n"
      "c.csv,vibration,Healthy\n",
      "/data");
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.class_names, (std::vector<std::string>{"Outer", "Healthy"}));
  EXPECT_EQ(m.rows[0].file_path, fs::path("/data/b.csv"));
  EXPECT_EQ(m.rows[1].modality, Modality::acoustic);
  EXPECT_EQ(m.rows[2].pair_key, "");
}

TEST(Manifest, MalformedRows) {
  EXPECT_THROW(parse_manifest("a.csv,vibration\n", "."), DataError);
  EXPECT_THROW(parse_manifest("a.csv,thermal,X\n", "."), DataError);
  EXPECT_THROW(parse_manifest("a.csv,vibration,\n", "."), DataError);
  EXPECT_THROW(parse_manifest("", "."), DataError);
}

class ManifestDataset : public ::testing::Test {
 protected:
  fs::path dir;

  void write_recording(const std::string& name, std::size_t n, double scale, double offset) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = offset + scale * std::sin(0.01 * static_cast<double>(i * i % 977));
    write_raw_f32le(dir / name, v);
  }
};

TEST_F(ManifestDataset, NineClassesOf420kSamples) {
  dir = scratch_dir("nine");
  std::string text;
  for (int c = 0; c < 9; ++c) {
    const std::string name = "v" + std::to_string(c) + ".f32";
    write_recording(name, 420000, 1.0, 0.0);
    text += name + ",vibration,C" + std::to_string(c) + "\n";
  }
  const WindowedDataset ds = build_dataset(parse_manifest(text, dir), DatasetMode::vibration_only);
  EXPECT_EQ(ds.windows.size(), 3780u);
  EXPECT_EQ(ds.num_classes(), 9u);
  EXPECT_TRUE(ds.windows.front().acoustic.empty());
}

TEST_F(ManifestDataset, PairedWindowsCoverSameRange) {
  dir = scratch_dir("paired");
  write_recording("v.f32", 3000, 1.0, 0.0);
  write_recording("a.f32", 3000, 2.0, 3.0);  // affine copy of v
  const Manifest m = parse_manifest("v.f32,vibration,X,k\na.f32,acoustic,X,k\n", dir);
  const WindowedDataset paired = build_dataset(m, DatasetMode::paired);
  ASSERT_EQ(paired.windows.size(), 3u);
  for (const Window& w : paired.windows) {
    for (std::size_t i = 0; i < w.vibration.size(); ++i) EXPECT_NEAR(w.vibration[i], w.acoustic[i], 1e-5);
    EXPECT_EQ(w.source_id, "k");
  }
  EXPECT_EQ(build_dataset(m, DatasetMode::vibration_only).windows.size(), 3u);
  EXPECT_EQ(build_dataset(m, DatasetMode::acoustic_only).windows.size(), 3u);
}

TEST_F(ManifestDataset, PairedMissingMemberNamesKey) {
  dir = scratch_dir("missing");
  write_recording("v.f32", 2000, 1.0, 0.0);
  const Manifest m = parse_manifest("v.f32,vibration,X,pump7\n", dir);
  try {
    build_dataset(m, DatasetMode::paired);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("pump7"), std::string::npos);
  }
  EXPECT_THROW(build_dataset(m, DatasetMode::acoustic_only), DataError);
}

TEST_F(ManifestDataset, PairedLengthMismatch) {
  dir = scratch_dir("lenmismatch");
  write_recording("v.f32", 2000, 1.0, 0.0);
  write_recording("a.f32", 3000, 1.0, 0.0);
  const Manifest m = parse_manifest("v.f32,vibration,X,k\na.f32,acoustic,X,k\n", dir);
  EXPECT_THROW(build_dataset(m, DatasetMode::paired), DataError);
}

// ------------------------------------------------------------ Synthetic data

SynthSpec small_spec() {
  SynthSpec s;
  s.windows_per_class = 42;  // one second at 42 kHz
  return s;
}

TEST(Synth, DeterministicForSeed) {
  const SynthSpec s = small_spec();
  Rng a = rng_new(1), b = rng_new(1);
  EXPECT_EQ(synth_recording(3, s, a, Modality::vibration).samples,
            synth_recording(3, s, b, Modality::vibration).samples);
  SynthSpec other = s;
  other.seed = s.seed + 1;
  Rng c = rng_new(1), d = rng_new(1);
  EXPECT_NE(synth_recording(3, other, c, Modality::vibration).samples,
            synth_recording(3, s, d, Modality::vibration).samples);
}

// Onset detector: |x| reaching 0.3 A after at least 0.5 ms below 0.1 A.
std::size_t count_onsets(const Tensor& x, double amplitude) {
  const std::size_t quiet = 21;
  std::size_t count = 0, quiet_run = quiet;
  bool armed = true;
  for (double v : x.values()) {
    const double a = std::fabs(v);
    quiet_run = a < 0.1 * amplitude ? quiet_run + 1 : 0;
    if (quiet_run >= quiet) armed = true;
    if (armed && a >= 0.3 * amplitude) {
      ++count;
      armed = false;
    }
  }
  return count;
}

TEST(Synth, ImpulseRateMatchesRepetitionFrequency) {
  SynthSpec s = small_spec();
  s.vibration_sigma = s.acoustic_sigma = 0.0;
  s.timing_jitter = 0.0;
  const auto sigs = default_signatures(9);
  for (std::size_t c = 0; c < 9; ++c) {
    Rng rng = rng_new(0);
    for (Modality m : {Modality::vibration, Modality::acoustic}) {
      const Recording r = synth_recording(c, s, rng, m);
      const double onsets = static_cast<double>(count_onsets(r.samples, sigs[c].amplitude));
      EXPECT_NEAR(onsets, sigs[c].repetition_hz, 1.0) << "class " << c;
    }
  }
}

TEST(Synth, JitteredImpulseRate) {
  SynthSpec s = small_spec();
  s.vibration_sigma = 0.0;
  const auto sigs = default_signatures(9);
  for (std::size_t c = 0; c < 9; ++c) {
    Rng rng = rng_new(0);
    const Recording r = synth_recording(c, s, rng, Modality::vibration);
    EXPECT_NEAR(static_cast<double>(count_onsets(r.samples, sigs[c].amplitude)), sigs[c].repetition_hz, 3.0);
  }
}

TEST(Synth, SilentSignatureWithoutNoiseIsZero) {
  SynthSpec s = small_spec();
  s.num_classes = 2;
  s.signatures = {{100, 3000, 1800, 0.0}, {150, 3000, 1800, 0.0}};
  s.vibration_sigma = s.acoustic_sigma = 0.0;
  Rng rng = rng_new(3);
  const Recording r = synth_recording(1, s, rng, Modality::acoustic);
  for (double v : r.samples.values()) EXPECT_EQ(v, 0.0);
}

TEST(Synth, PureNoiseHasRequestedSigma) {
  SynthSpec s = small_spec();
  s.num_classes = 2;
  s.signatures = {{100, 3000, 1800, 0.0}, {150, 3000, 1800, 0.0}};
  s.acoustic_sigma = 0.7;
  Rng rng = rng_new(3);
  EXPECT_NEAR(std_of(synth_recording(0, s, rng, Modality::acoustic).samples), 0.7, 0.01);
}

TEST(Synth, VibrationCleanerThanAcoustic) {
  const SynthSpec s = small_spec();
  EXPECT_LT(s.vibration_sigma, s.acoustic_sigma);
  SynthSpec clean = s;
  clean.vibration_sigma = clean.acoustic_sigma = 0.0;
  for (std::size_t c = 0; c < 9; ++c) {
    Rng rng = rng_new(0);
    const double vib_signal = std_of(synth_recording(c, clean, rng, Modality::vibration).samples);
    const double ac_signal = std_of(synth_recording(c, clean, rng, Modality::acoustic).samples);
    EXPECT_GT(vib_signal / s.vibration_sigma, ac_signal / s.acoustic_sigma);
  }
}

TEST(Synth, InvalidSpecs) {
  SynthSpec s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(synth_dataset(s), ConfigError);
  s = small_spec();
  s.acoustic_sigma = -1.0;
  EXPECT_THROW(synth_dataset(s), ConfigError);
  s = small_spec();
  s.num_classes = 2;
  s.signatures = {{100, 3000, 1800, 1.0}, {100, 2000, 1800, 1.0}};
  EXPECT_THROW(synth_dataset(s), ConfigError);
}

TEST(Synth, DatasetIsPairedAndBalanced) {
  const WindowedDataset ds = synth_dataset(SynthSpec{});
  EXPECT_EQ(ds.windows.size(), 1800u);
  EXPECT_EQ(ds.mode, DatasetMode::paired);
  std::vector<std::size_t> counts(9, 0);
  for (const Window& w : ds.windows) {
    ++counts[w.label];
    ASSERT_EQ(w.vibration.shape(), (Shape{1000, 1}));
    ASSERT_EQ(w.acoustic.shape(), (Shape{1000, 1}));
  }
  for (std::size_t c : counts) EXPECT_EQ(c, 200u);
  EXPECT_EQ(ds.class_names.front(), "Healthy");
}

}  // namespace
}  // namespace fdiag
