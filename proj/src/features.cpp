#include "formeq/features.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>

namespace formeq {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::mcep: return "mcep";
    case FeatureKind::logspec: return "logspec";
    case FeatureKind::pairs: return "pairs";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "mcep") return FeatureKind::mcep;
  if (name == "logspec") return FeatureKind::logspec;
  if (name == "pairs") return FeatureKind::pairs;
  throw InputError("unknown feature kind '" + name + "'");
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

FrameGrid FrameGrid::make(std::size_t num_samples, double sample_rate, double frame_shift_s,
                          double frame_len_s) {
  if (!(sample_rate > 0)) throw InputError("sample rate must be positive");
  if (!(frame_shift_s > 0)) throw InputError("frame shift must be positive");
  if (frame_len_s < frame_shift_s) throw InputError("frame length shorter than frame shift");
  FrameGrid grid;
  grid.hop = static_cast<std::size_t>(std::lround(frame_shift_s * sample_rate));
  grid.length = static_cast<std::size_t>(std::lround(frame_len_s * sample_rate));
  if (grid.hop == 0) throw InputError("frame shift below one sample");
  grid.fft_size = next_pow2(grid.length);
  grid.count = num_samples >= grid.length ? (num_samples - grid.length) / grid.hop + 1 : 0;
  return grid;
}

Eigen::VectorXd hann_window(std::size_t n) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    w(static_cast<Eigen::Index>(i)) =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

FeatureSequence stft_analyze(const AudioClip& clip, double frame_shift_s, double frame_len_s) {
  if (clip.samples.empty()) throw InputError("stft: empty clip");
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw InputError("stft: non-finite sample");
  }
  const FrameGrid grid = FrameGrid::make(clip.samples.size(), clip.sample_rate, frame_shift_s,
                                         frame_len_s);
  if (grid.count == 0) throw InputError("stft: clip shorter than one analysis frame");

  const Eigen::VectorXd window = hann_window(grid.length);
  const auto bins = static_cast<Eigen::Index>(grid.bins());

  FeatureSequence seq;
  seq.kind = FeatureKind::logspec;
  seq.frame_shift = frame_shift_s;
  seq.frame_length = frame_len_s;
  seq.sample_rate = clip.sample_rate;
  seq.order = 0;
  seq.alpha = 0.0;
  seq.frames.resize(bins, static_cast<Eigen::Index>(grid.count));

  Eigen::FFT<double> fft;
  std::vector<double> buffer(grid.fft_size);
  std::vector<std::complex<double>> spectrum;
  for (std::size_t f = 0; f < grid.count; ++f) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    const std::size_t start = f * grid.hop;
    for (std::size_t n = 0; n < grid.length; ++n) {
      buffer[n] = clip.samples[start + n] * window(static_cast<Eigen::Index>(n));
    }
    fft.fwd(spectrum, buffer);
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double mag = std::abs(spectrum[static_cast<std::size_t>(k)]);
      seq.frames(k, static_cast<Eigen::Index>(f)) = std::log(std::max(mag, kSpectralFloor));
    }
  }
  return seq;
}

double warp_frequency(double omega, double alpha) {
  return omega + 2.0 * std::atan(alpha * std::sin(omega) / (1.0 - alpha * std::cos(omega)));
}

double warp_frequency_slope(double omega, double alpha) {
  return (1.0 - alpha * alpha) / (1.0 - 2.0 * alpha * std::cos(omega) + alpha * alpha);
}

WarpedCepstrum::WarpedCepstrum(Eigen::Index bins, int order, double alpha)
    : order_(order), alpha_(alpha) {
  if (order < 1) throw InputError("mcep order must be at least 1");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("mcep alpha must lie in [0, 1)");
  if (bins < 2) throw InputError("log spectrum needs at least two bins");
  if (order >= bins) {
    throw InputError("mcep order " + std::to_string(order) + " needs more than " +
                     std::to_string(bins) + " bins");
  }
  const Eigen::Index coeffs = order + 1;
  const double intervals = static_cast<double>(bins - 1);
  analysis_.resize(coeffs, bins);
  synthesis_.resize(bins, coeffs);
  for (Eigen::Index k = 0; k < bins; ++k) {
    const double omega = std::numbers::pi * static_cast<double>(k) / intervals;
    const double warped = warp_frequency(omega, alpha);
    const double weight =
        ((k == 0 || k == bins - 1) ? 0.5 : 1.0) * warp_frequency_slope(omega, alpha) / intervals;
    for (Eigen::Index m = 0; m < coeffs; ++m) {
      const double c = std::cos(static_cast<double>(m) * warped);
      analysis_(m, k) = weight * c;
      synthesis_(k, m) = m == 0 ? 1.0 : 2.0 * c;
    }
  }
}

Eigen::VectorXd WarpedCepstrum::analyze(const Eigen::Ref<const Eigen::VectorXd>& log_spectrum) const {
  if (log_spectrum.size() != bins()) throw InputError("mcep analysis: bin count mismatch");
  return analysis_ * log_spectrum;
}

Eigen::VectorXd WarpedCepstrum::synthesize(const Eigen::Ref<const Eigen::VectorXd>& mcep) const {
  if (mcep.size() != order_ + 1) throw InputError("mcep synthesis: order mismatch");
  return synthesis_ * mcep;
}

Eigen::MatrixXd WarpedCepstrum::analyze_frames(const Eigen::Ref<const Eigen::MatrixXd>& log_spectra) const {
  if (log_spectra.rows() != bins()) throw InputError("mcep analysis: bin count mismatch");
  Eigen::MatrixXd out(order_ + 1, log_spectra.cols());
  for (Eigen::Index f = 0; f < log_spectra.cols(); ++f) out.col(f) = analysis_ * log_spectra.col(f);
  return out;
}

Eigen::MatrixXd WarpedCepstrum::synthesize_frames(const Eigen::Ref<const Eigen::MatrixXd>& mceps) const {
  if (mceps.rows() != order_ + 1) throw InputError("mcep synthesis: order mismatch");
  Eigen::MatrixXd out(bins(), mceps.cols());
  for (Eigen::Index f = 0; f < mceps.cols(); ++f) out.col(f) = synthesis_ * mceps.col(f);
  return out;
}

Eigen::VectorXd mcep_from_logspec(const Eigen::Ref<const Eigen::VectorXd>& log_spectrum, int order,
                                  double alpha) {
  return WarpedCepstrum(log_spectrum.size(), order, alpha).analyze(log_spectrum);
}

Eigen::VectorXd logspec_from_mcep(const Eigen::Ref<const Eigen::VectorXd>& mcep, std::size_t fft_size,
                                  double alpha) {
  const auto order = static_cast<int>(mcep.size()) - 1;
  if (fft_size < 2 * static_cast<std::size_t>(order + 1)) {
    throw InputError("logspec_from_mcep: fft size " + std::to_string(fft_size) +
                     " too small for order " + std::to_string(order));
  }
  return WarpedCepstrum(static_cast<Eigen::Index>(fft_size / 2 + 1), order, alpha).synthesize(mcep);
}

FeatureSequence mcep_sequence(const FeatureSequence& logspec, int order, double alpha) {
  if (logspec.kind != FeatureKind::logspec) throw InputError("mcep_sequence: expected a logspec sequence");
  const WarpedCepstrum cepstrum(logspec.dim(), order, alpha);
  FeatureSequence out = logspec;
  out.kind = FeatureKind::mcep;
  out.order = order;
  out.alpha = alpha;
  out.frames = cepstrum.analyze_frames(logspec.frames);
  return out;
}

double mean_mel_cd(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
  if (a.cols() != b.cols()) throw InputError("mean_mel_cd: frame count mismatch");
  if (a.cols() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index f = 0; f < a.cols(); ++f) sum += mel_cd(a.col(f), b.col(f));
  return sum / static_cast<double>(a.cols());
}

}  // namespace formeq
