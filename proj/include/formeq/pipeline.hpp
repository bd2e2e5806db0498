#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "formeq/alignment.hpp"
#include "formeq/complexity.hpp"
#include "formeq/dfw.hpp"
#include "formeq/features.hpp"
#include "formeq/formants.hpp"
#include "formeq/gmm.hpp"

namespace formeq {

struct AnalysisConfig {
  double sample_rate = kDefaultSampleRate;
  double frame_shift = kDefaultFrameShift;
  double frame_length = kDefaultFrameLength;
  int order = kDefaultMcepOrder;
  double alpha = kDefaultAlpha;
  int lpc_order = kDefaultLpcOrder;
  double pre_emphasis = kDefaultPreEmphasis;

  std::size_t fft_size() const;
  Eigen::Index bins() const { return static_cast<Eigen::Index>(fft_size() / 2 + 1); }
  double nyquist() const { return 0.5 * sample_rate; }

  friend bool operator==(const AnalysisConfig&, const AnalysisConfig&) = default;
};

struct TrainConfig {
  AnalysisConfig analysis;
  int components = 32;
  int formant_components = kFormantGmmComponents;
  std::uint64_t seed = 0;
  int max_iter = 100;
  double rel_tol = 1e-6;
  double sigma = kDefaultSigma;
  InvalidFormantPolicy invalid_policy = InvalidFormantPolicy::keep_unwarped;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

struct ManifestEntry {
  std::filesystem::path source;
  std::filesystem::path target;
  std::string id;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
};

/// CSV `src_wav,tgt_wav,utt_id` (header optional). Relative paths resolve
/// against the manifest's directory.
CorpusManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);

/// Mel-cepstra, their spectral envelopes and formants on one frame grid.
UtteranceFeatures analyze_utterance(const AudioClip& clip, const AnalysisConfig& config);

/// Aligned frame pairs for every utterance of a manifest, in manifest order.
std::vector<AlignedPair> align_corpus(const CorpusManifest& manifest, const AnalysisConfig& config);

struct ModelBundle {
  JointGmm main_gmm;     // c1..c_order -> c1..c_order
  JointGmm formant_gmm;  // c1..c_order -> [f1..f4, b1..b4]
  TrainConfig config;
  EqualizationReport stats;
};

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_model(const std::filesystem::path& path);

struct TrainDiagnostics {
  std::size_t aligned_pairs = 0;
  EmTrace main_trace;
  EmTrace formant_trace;
};

/// Trains both mixtures from an already equalized corpus.
ModelBundle train_from_equalized(const CorpusEqualization& corpus, const TrainConfig& config,
                                 TrainDiagnostics* diagnostics = nullptr);

/// analyze -> formants -> DTW -> equalize/reject -> EM.
ModelBundle train(const CorpusManifest& manifest, const TrainConfig& config, TrainDiagnostics* diagnostics = nullptr);

struct ConvertedUtterance {
  FeatureSequence mcep;
  FeatureSequence logspec;
  std::size_t warped_frames = 0;
};

/// Maps source frames to the equalized target space, then warps each frame
/// from the measured source formants to the predicted target formants.
ConvertedUtterance convert_utterance(const AudioClip& source, const ModelBundle& model);

struct EvaluationOptions {
  Eigen::Index grid_rows = 50;
  Eigen::Index grid_cols = 50;
};

struct EvaluationReport {
  std::size_t utterances = 0;
  std::size_t aligned_pairs = 0;
  double melcd_source_target = 0.0;
  double melcd_converted_target = 0.0;
  EqualizationReport equalization;  // on the evaluated corpus
  double complexity_raw = 0.0;
  double complexity_equalized = 0.0;
};

EvaluationReport evaluate(const ModelBundle& model, const CorpusManifest& manifest,
                          const EvaluationOptions& options = {});
nlohmann::json report_to_json(const EvaluationReport& report);
nlohmann::json report_to_json(const EqualizationReport& report);

/// GMM training vectors (c1..c_order of both sides) as a `pairs` sequence.
FeatureSequence pairs_sequence(const Eigen::Ref<const Eigen::MatrixXd>& source_mcep,
                               const Eigen::Ref<const Eigen::MatrixXd>& target_mcep, const AnalysisConfig& config);

/// Magnitude-only iterative phase reconstruction with overlap-add, peak
/// normalised. Debug listening aid; not an evaluated vocoder.
AudioClip resynthesize(const FeatureSequence& logspecs, int iterations = 32);

}  // namespace formeq
