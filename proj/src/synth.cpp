#include "fusiondiag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fusiondiag/errors.hpp"

namespace fdiag {

namespace {

constexpr std::uint64_t kTimingStream = 0x7100;
constexpr std::uint64_t kNoiseStream = 0x4e00;
// Impulse response is truncated after this many time constants.
constexpr double kDecaySpan = 12.0;

}  // namespace

std::vector<FaultSignature> default_signatures(std::size_t num_classes) {
  // Classes come in pairs of one fault family (e.g. developing vs. faulty):
  // neighbouring classes share a resonance band and differ in impulse rate,
  // a small resonance shift and the impulse strength.
  std::vector<FaultSignature> sigs;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double family = static_cast<double>(c / 2);
    const double severity = static_cast<double>(c % 2);
    FaultSignature s;
    s.repetition_hz = 80.0 + 30.0 * static_cast<double>(c);
    s.vibration_resonance_hz = 2000.0 + 500.0 * family + 150.0 * severity;
    s.acoustic_resonance_hz = 1200.0 + 300.0 * family + 90.0 * severity;
    s.amplitude = 1.0 - 0.4 * severity;
    sigs.push_back(s);
  }
  return sigs;
}

SynthSpec resolved(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (spec.windows_per_class == 0) throw ConfigError("windows_per_class must be >= 1");
  if (spec.window_len == 0) throw ConfigError("window_len must be >= 1");
  if (!(spec.sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(spec.vibration_sigma >= 0.0) || !(spec.acoustic_sigma >= 0.0)) {
    throw ConfigError("noise sigma must be >= 0");
  }
  if (!(spec.decay_s > 0.0)) throw ConfigError("impulse decay must be positive");
  if (!(spec.timing_jitter >= 0.0) || spec.timing_jitter >= 0.5) {
    throw ConfigError("timing jitter must lie in [0, 0.5)");
  }
  SynthSpec out = spec;
  if (out.signatures.empty()) out.signatures = default_signatures(out.num_classes);
  if (out.signatures.size() != out.num_classes) {
    throw ConfigError("need one fault signature per class");
  }
  std::vector<double> rates;
  for (const FaultSignature& s : out.signatures) {
    if (!(s.repetition_hz > 0.0)) throw ConfigError("repetition frequency must be positive");
    rates.push_back(s.repetition_hz);
  }
  std::sort(rates.begin(), rates.end());
  if (std::adjacent_find(rates.begin(), rates.end()) != rates.end()) {
    throw ConfigError("repetition frequencies must be distinct across classes");
  }
  return out;
}

std::vector<double> impulse_times(std::size_t class_id, const SynthSpec& spec) {
  const SynthSpec s = resolved(spec);
  if (class_id >= s.num_classes) throw ConfigError("class id out of range");
  const double duration =
      static_cast<double>(s.windows_per_class * s.window_len) / s.sample_rate_hz;
  const double period = 1.0 / s.signatures[class_id].repetition_hz;
  Rng rng(derive_seed(s.seed, kTimingStream + class_id));
  std::vector<double> times;
  double t = rng.uniform() * period;
  while (t < duration) {
    times.push_back(t);
    const double step = 1.0 + s.timing_jitter * rng.normal();
    t += period * std::clamp(step, 0.5, 1.5);
  }
  return times;
}

Recording synth_recording(std::size_t class_id, const SynthSpec& spec, Rng& rng,
                          Modality modality) {
  const SynthSpec s = resolved(spec);
  if (class_id >= s.num_classes) throw ConfigError("class id out of range");
  const FaultSignature& sig = s.signatures[class_id];
  const bool vib = modality == Modality::vibration;
  const double resonance = vib ? sig.vibration_resonance_hz : sig.acoustic_resonance_hz;
  const double sigma = vib ? s.vibration_sigma : s.acoustic_sigma;
  const std::size_t n = s.windows_per_class * s.window_len;
  const double fs = s.sample_rate_hz;

  std::vector<double> x(n, 0.0);
  if (sig.amplitude != 0.0) {
    const auto span = static_cast<std::size_t>(std::ceil(kDecaySpan * s.decay_s * fs));
    for (double onset : impulse_times(class_id, s)) {
      const auto first = static_cast<std::size_t>(std::ceil(onset * fs));
      for (std::size_t i = first; i < std::min(n, first + span); ++i) {
        const double dt = static_cast<double>(i) / fs - onset;
        x[i] += sig.amplitude * std::exp(-dt / s.decay_s) *
                std::sin(2.0 * std::numbers::pi * resonance * dt);
      }
    }
  }
  if (sigma > 0.0) {
    for (double& v : x) v += sigma * rng.normal();
  }
  return Recording{Tensor({n}, std::move(x)), fs, class_id, modality,
                   "synth-class-" + std::to_string(class_id)};
}

std::uint64_t synth_noise_seed(const SynthSpec& spec, std::size_t class_id, Modality modality) {
  return derive_seed(spec.seed,
                     kNoiseStream + 2 * class_id + (modality == Modality::acoustic ? 1 : 0));
}

WindowedDataset synth_dataset(const SynthSpec& spec) {
  const SynthSpec s = resolved(spec);
  WindowedDataset ds;
  ds.mode = DatasetMode::paired;
  ds.window_len = s.window_len;
  ds.class_names = default_class_names(s.num_classes);
  for (std::size_t c = 0; c < s.num_classes; ++c) {
    Rng vib_rng(synth_noise_seed(s, c, Modality::vibration));
    Rng ac_rng(synth_noise_seed(s, c, Modality::acoustic));
    const Recording vib = synth_recording(c, s, vib_rng, Modality::vibration);
    const Recording ac = synth_recording(c, s, ac_rng, Modality::acoustic);
    const auto vib_windows = segment(vib, s.window_len, s.window_len);
    const auto ac_windows = segment(ac, s.window_len, s.window_len);
    for (std::size_t w = 0; w < vib_windows.size(); ++w) {
      ds.windows.push_back(Window{normalize_window(vib_windows[w]),
                                  normalize_window(ac_windows[w]), c, vib.source_id});
    }
  }
  return ds;
}

}  // namespace fdiag
