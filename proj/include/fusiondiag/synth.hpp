#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fusiondiag/data.hpp"
#include "fusiondiag/rng.hpp"

namespace fdiag {

// Periodic decaying impulses exciting a structural resonance.
struct FaultSignature {
  double repetition_hz = 100.0;
  double vibration_resonance_hz = 3000.0;
  double acoustic_resonance_hz = 1800.0;
  double amplitude = 1.0;
};

/// Deterministic stand-in for a multi-sensor fault dataset.
///
/// Each class gets one vibration and one acoustic recording of
/// windows_per_class * window_len samples. Both channels of a class share the
/// same impulse times; they differ in resonance and noise level.
struct SynthSpec {
  std::size_t num_classes = 9;
  std::size_t windows_per_class = 200;
  std::size_t window_len = kDefaultWindowLen;
  std::uint64_t seed = 42;
  double sample_rate_hz = kDefaultSampleRateHz;
  double vibration_sigma = 0.1;
  double acoustic_sigma = 0.2;
  double decay_s = 0.0008;     // impulse envelope time constant
  double timing_jitter = 0.02;  // std of impulse spacing, fraction of the period
  std::vector<FaultSignature> signatures;  // empty -> default_signatures(num_classes)
};

std::vector<FaultSignature> default_signatures(std::size_t num_classes);

// Validates and fills in default signatures.
SynthSpec resolved(const SynthSpec& spec);

// Impulse onset times (seconds) of a class over its recording; depends only
// on (spec.seed, class_id), so both modalities see the same events.
std::vector<double> impulse_times(std::size_t class_id, const SynthSpec& spec);

// rng drives the additive Gaussian noise only.
Recording synth_recording(std::size_t class_id, const SynthSpec& spec, Rng& rng, Modality modality);

// Paired, normalized, class-balanced windows.
WindowedDataset synth_dataset(const SynthSpec& spec);

// Noise stream used by synth_dataset for a (class, modality) recording.
std::uint64_t synth_noise_seed(const SynthSpec& spec, std::size_t class_id, Modality modality);

}  // namespace fdiag
