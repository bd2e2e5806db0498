#pragma once

#include <Eigen/Core>

#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

#include "formeq/features.hpp"

namespace formeq {

inline constexpr int kFormantCount = 4;
inline constexpr int kDefaultLpcOrder = 14;
inline constexpr double kDefaultPreEmphasis = 0.97;
inline constexpr double kMinFormantHz = 90.0;
inline constexpr double kNyquistMarginHz = 100.0;
inline constexpr double kMaxBandwidthHz = 700.0;

struct Formant {
  double frequency = 0.0;  // Hz
  double bandwidth = 0.0;  // Hz
};

/// Formants of one analysis frame, sorted by strictly increasing frequency.
/// `valid` is set only when exactly kFormantCount formants were found.
struct FormantFrame {
  std::vector<Formant> formants;
  bool valid = false;
};

using FormantTrack = std::vector<FormantFrame>;

/// Autocorrelation-method LPC via Levinson-Durbin. Returns [1, a_1, ..., a_order]
/// for A(z) = 1 + sum a_k z^-k. Any root of A on or outside the unit circle is
/// reflected to 1/|r| so the synthesis filter is minimum phase.
/// Throws NumericalError("silent frame") for a zero-energy frame.
Eigen::VectorXd lpc_coeffs(std::span<const double> frame, int order = kDefaultLpcOrder);

/// Roots of z^p + c_1 z^(p-1) + ... + c_p, given coeffs = [1, c_1, ..., c_p].
std::vector<std::complex<double>> polynomial_roots(const Eigen::Ref<const Eigen::VectorXd>& coeffs);

/// Monic real polynomial with the given roots (complex roots must come in conjugate pairs).
Eigen::VectorXd polynomial_from_roots(std::span<const std::complex<double>> roots);

/// Root magnitude <-> bandwidth: bw = -(fs / pi) ln|r|.
double bandwidth_from_radius(double radius, double sample_rate);
double radius_from_bandwidth(double bandwidth, double sample_rate);

FormantFrame formants_from_lpc(const Eigen::Ref<const Eigen::VectorXd>& coeffs, double sample_rate);

struct FormantOptions {
  int lpc_order = kDefaultLpcOrder;
  double pre_emphasis = kDefaultPreEmphasis;
};

/// One FormantFrame per grid frame. Frames that cannot be analysed are
/// reported as invalid rather than raising.
FormantTrack track_formants(const AudioClip& clip, const FrameGrid& grid, const FormantOptions& options = {});

/// Tracks on the same frame grid as a sequence produced by stft_analyze.
FormantTrack track_formants(const AudioClip& clip, const FeatureSequence& companion,
                            const FormantOptions& options = {});

/// Header `frame,f1,b1,f2,b2,f3,b3,f4,b4,valid`; invalid frames leave numeric cells empty.
void write_formant_csv(std::ostream& out, const FormantTrack& track);

}  // namespace formeq
