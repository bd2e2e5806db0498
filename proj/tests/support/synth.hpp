#pragma once

// Source-filter test signals: impulse-train excitation through a cascade of
// second-order resonators, plus a two-speaker parallel corpus whose target
// formants are a known per-utterance warp of the source formants.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "formeq/features.hpp"
#include "formeq/pipeline.hpp"

namespace formeq::testing {

struct Resonance {
  double frequency;
  double bandwidth;
};

using FormantSet = std::array<Resonance, 4>;

/// One control point per block of `block` samples.
struct VoiceTrack {
  std::vector<FormantSet> formants;
  std::vector<double> f0;
  std::size_t block = 80;
};

struct VoiceOptions {
  double sample_rate = 16000.0;
  double noise = 0.0;  // std-dev of additive white noise relative to the peak
  double glottal_pole = 0.95;
  std::uint64_t seed = 1;
};

AudioClip render_voice(const VoiceTrack& track, const VoiceOptions& options = {});

/// Constant-formant vowel.
AudioClip steady_vowel(const FormantSet& formants, double f0, double seconds, const VoiceOptions& options = {});

/// Impulse response of the resonator cascade (no glottal shaping), useful
/// when the exact all-pole structure matters.
AudioClip resonator_impulse_response(const FormantSet& formants, std::size_t samples, double sample_rate);

struct CorpusOptions {
  int utterances = 20;
  std::uint64_t seed = 7;
  double min_warp = 1.0;  // target formant scale range, drawn per utterance (log-uniform)
  double max_warp = 1.4;
  double formant_jitter = 0.03;  // per-utterance, per-formant relative perturbation
  double noise = 0.0002;
  bool identical_target = false;
  double source_f0 = 110.0;
  double target_f0 = 125.0;
  double source_glottal_pole = 0.95;
  double target_glottal_pole = 0.85;
};

struct SyntheticCorpus {
  std::vector<AudioClip> source;
  std::vector<AudioClip> target;
  std::vector<double> warp;  // per-utterance formant scale
};

SyntheticCorpus make_corpus(const CorpusOptions& options);

/// Writes WAVs plus manifest.csv under `dir`; returns the manifest path.
std::filesystem::path write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir,
                                   std::size_t first = 0, std::size_t count = static_cast<std::size_t>(-1),
                                   const std::string& manifest_name = "manifest.csv");

/// Fresh empty directory under the system temp directory.
std::filesystem::path scratch_dir(const std::string& tag);

}  // namespace formeq::testing
