#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "formeq/error.hpp"

namespace formeq {

inline constexpr double kSpectralFloor = 1e-10;
inline constexpr int kDefaultMcepOrder = 39;
inline constexpr double kDefaultAlpha = 0.42;
inline constexpr double kDefaultFrameShift = 0.005;
inline constexpr double kDefaultFrameLength = 0.025;
inline constexpr double kDefaultSampleRate = 16000.0;

struct AudioClip {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Reads a 16-bit PCM mono RIFF/WAVE file. Samples are scaled to [-1, 1).
AudioClip read_wav(const std::filesystem::path& path);
/// Writes 16-bit PCM mono; samples outside [-1, 1] are clipped.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

enum class FeatureKind { mcep, logspec, pairs };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

/// Frame-synchronous features. One frame per column of `frames`.
struct FeatureSequence {
  Eigen::MatrixXd frames;
  FeatureKind kind = FeatureKind::mcep;
  double frame_shift = kDefaultFrameShift;
  double frame_length = kDefaultFrameLength;
  double sample_rate = kDefaultSampleRate;
  double alpha = kDefaultAlpha;
  int order = kDefaultMcepOrder;
  // Only meaningful for kind == pairs: rows [0, source_dim) hold the source half.
  int source_dim = 0;

  Eigen::Index dim() const { return frames.rows(); }
  Eigen::Index size() const { return frames.cols(); }
  bool empty() const { return frames.cols() == 0; }
};

/// Sample-domain frame layout shared by STFT analysis, formant tracking and
/// resynthesis. Frame i covers samples [i*hop, i*hop + length).
struct FrameGrid {
  std::size_t hop = 80;
  std::size_t length = 400;
  std::size_t fft_size = 512;
  std::size_t count = 0;

  static FrameGrid make(std::size_t num_samples, double sample_rate, double frame_shift_s,
                        double frame_len_s);
  std::size_t bins() const { return fft_size / 2 + 1; }
};

std::size_t next_pow2(std::size_t n);

/// Periodic Hann window of length n.
Eigen::VectorXd hann_window(std::size_t n);

/// Log-magnitude STFT. Each column is one frame of fft_size/2+1 natural-log
/// magnitudes, floored at kSpectralFloor before the log.
FeatureSequence stft_analyze(const AudioClip& clip, double frame_shift_s = kDefaultFrameShift,
                             double frame_len_s = kDefaultFrameLength);

/// Frequency of the all-pass (first-order) warp at linear frequency omega in [0, pi].
double warp_frequency(double omega, double alpha);
/// Derivative of warp_frequency with respect to omega.
double warp_frequency_slope(double omega, double alpha);

/// Mel-cepstral analysis/synthesis for a fixed (bins, order, alpha) triple.
///
/// The log spectrum is modelled as  L(w) = c0 + 2 * sum_{m>=1} c_m cos(m * w~(w)),
/// with w~ the all-pass warped frequency. Analysis evaluates the truncated
/// cosine transform on the warped axis by changing variables back to the
/// linear bin grid, so the integral is a trapezoid sum over the original bins
/// weighted by the warp slope. For smooth spectra the rule is spectrally
/// accurate and synthesis followed by analysis is exact to rounding.
class WarpedCepstrum {
 public:
  WarpedCepstrum(Eigen::Index bins, int order = kDefaultMcepOrder, double alpha = kDefaultAlpha);

  Eigen::Index bins() const { return synthesis_.rows(); }
  int order() const { return order_; }
  double alpha() const { return alpha_; }

  /// (order+1) x bins
  const Eigen::MatrixXd& analysis_matrix() const { return analysis_; }
  /// bins x (order+1)
  const Eigen::MatrixXd& synthesis_matrix() const { return synthesis_; }

  Eigen::VectorXd analyze(const Eigen::Ref<const Eigen::VectorXd>& log_spectrum) const;
  Eigen::VectorXd synthesize(const Eigen::Ref<const Eigen::VectorXd>& mcep) const;

  Eigen::MatrixXd analyze_frames(const Eigen::Ref<const Eigen::MatrixXd>& log_spectra) const;
  Eigen::MatrixXd synthesize_frames(const Eigen::Ref<const Eigen::MatrixXd>& mceps) const;

 private:
  int order_;
  double alpha_;
  Eigen::MatrixXd analysis_;
  Eigen::MatrixXd synthesis_;
};

Eigen::VectorXd mcep_from_logspec(const Eigen::Ref<const Eigen::VectorXd>& log_spectrum,
                                  int order = kDefaultMcepOrder, double alpha = kDefaultAlpha);
Eigen::VectorXd logspec_from_mcep(const Eigen::Ref<const Eigen::VectorXd>& mcep,
                                  std::size_t fft_size, double alpha = kDefaultAlpha);

/// Converts a logspec sequence to an mcep sequence, carrying metadata along.
FeatureSequence mcep_sequence(const FeatureSequence& logspec, int order = kDefaultMcepOrder,
                              double alpha = kDefaultAlpha);

inline constexpr double kMelCdScale = 4.3429448190325175;  // 10 / ln 10

/// Mel-cepstral distortion in dB, c0 excluded:
///   (10 / ln 10) * sqrt(2 * sum_{d>=1} (a_d - b_d)^2)
template <typename DerivedA, typename DerivedB>
double mel_cd(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw InputError("mel_cd: order mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw InputError("mel_cd: need at least c0 and c1");
  const Eigen::Index n = a.size() - 1;
  return kMelCdScale * std::sqrt(2.0 * (a.tail(n) - b.tail(n)).squaredNorm());
}

/// Mean mel_cd over matching columns of two frame matrices.
double mean_mel_cd(const Eigen::Ref<const Eigen::MatrixXd>& a,
                   const Eigen::Ref<const Eigen::MatrixXd>& b);

// VCF1 feature files: "VCF1", u32 dim, u32 count, f32 frames (frame-major),
// u32 json length, json metadata. All little-endian.
void write_vcf1(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_vcf1(const std::filesystem::path& path);

}  // namespace formeq
