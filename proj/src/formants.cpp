#include "formeq/formants.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

namespace formeq {

Eigen::VectorXd lpc_coeffs(std::span<const double> frame, int order) {
  if (order < 1) throw InputError("lpc: order must be positive");
  const auto n = static_cast<int>(frame.size());
  if (n <= order) throw InputError("lpc: frame must be longer than the order");

  Eigen::VectorXd r(order + 1);
  for (int lag = 0; lag <= order; ++lag) {
    double acc = 0.0;
    for (int i = 0; i + lag < n; ++i) acc += frame[i] * frame[i + lag];
    r(lag) = acc;
  }
  if (!(r(0) > 0.0)) throw NumericalError("silent frame");

  // Levinson-Durbin
  Eigen::VectorXd a = Eigen::VectorXd::Zero(order + 1);
  Eigen::VectorXd prev(order + 1);
  a(0) = 1.0;
  double error = r(0);
  for (int i = 1; i <= order; ++i) {
    double acc = r(i);
    for (int j = 1; j < i; ++j) acc += a(j) * r(i - j);
    const double k = -acc / error;
    prev = a;
    for (int j = 1; j < i; ++j) a(j) = prev(j) + k * prev(i - j);
    a(i) = k;
    error *= (1.0 - k * k);
    if (!(error > 0.0)) break;  // perfectly predictable; remaining coefficients stay zero
  }
  if (!a.allFinite()) throw NumericalError("lpc: non-finite coefficients");

  auto roots = polynomial_roots(a);
  bool reflected = false;
  for (auto& z : roots) {
    const double mag = std::abs(z);
    if (mag >= 1.0) {
      // 1/conj(z) keeps the argument and inverts the radius.
      z = mag > 0.0 ? z / (mag * mag) : z;
      reflected = true;
    }
  }
  if (reflected) a = polynomial_from_roots(roots);
  return a;
}

std::vector<std::complex<double>> polynomial_roots(const Eigen::Ref<const Eigen::VectorXd>& coeffs) {
  const Eigen::Index degree = coeffs.size() - 1;
  if (degree < 1) return {};
  if (coeffs(0) == 0.0) throw InputError("polynomial_roots: leading coefficient is zero");
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (Eigen::Index j = 0; j < degree; ++j) companion(0, j) = -coeffs(j + 1) / coeffs(0);
  for (Eigen::Index i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) throw NumericalError("polynomial_roots: eigen solver failed");
  const auto& values = solver.eigenvalues();
  return {values.data(), values.data() + values.size()};
}

Eigen::VectorXd polynomial_from_roots(std::span<const std::complex<double>> roots) {
  std::vector<std::complex<double>> poly{1.0};
  for (const auto& z : roots) {
    poly.push_back(0.0);
    for (std::size_t i = poly.size() - 1; i > 0; --i) poly[i] -= z * poly[i - 1];
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(poly.size()));
  for (std::size_t i = 0; i < poly.size(); ++i) out(static_cast<Eigen::Index>(i)) = poly[i].real();
  return out;
}

double bandwidth_from_radius(double radius, double sample_rate) {
  return -(sample_rate / std::numbers::pi) * std::log(radius);
}

double radius_from_bandwidth(double bandwidth, double sample_rate) {
  return std::exp(-std::numbers::pi * bandwidth / sample_rate);
}

FormantFrame formants_from_lpc(const Eigen::Ref<const Eigen::VectorXd>& coeffs, double sample_rate) {
  const double nyquist = 0.5 * sample_rate;
  std::vector<Formant> candidates;
  for (const auto& z : polynomial_roots(coeffs)) {
    if (!(z.imag() > 0.0)) continue;
    const double freq = sample_rate / (2.0 * std::numbers::pi) * std::arg(z);
    const double bw = bandwidth_from_radius(std::abs(z), sample_rate);
    if (freq <= kMinFormantHz || freq >= nyquist - kNyquistMarginHz) continue;
    if (!(bw > 0.0) || bw >= kMaxBandwidthHz) continue;
    candidates.push_back({freq, bw});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Formant& a, const Formant& b) {
    return a.frequency != b.frequency ? a.frequency < b.frequency : a.bandwidth < b.bandwidth;
  });
  FormantFrame frame;
  for (const auto& c : candidates) {
    if (!frame.formants.empty() && c.frequency <= frame.formants.back().frequency) continue;
    frame.formants.push_back(c);
    if (static_cast<int>(frame.formants.size()) == kFormantCount) break;
  }
  frame.valid = static_cast<int>(frame.formants.size()) == kFormantCount;
  return frame;
}

FormantTrack track_formants(const AudioClip& clip, const FrameGrid& grid, const FormantOptions& options) {
  FormantTrack track(grid.count);
  if (grid.count == 0) return track;
  if ((grid.count - 1) * grid.hop + grid.length > clip.samples.size()) {
    throw InputError("track_formants: frame grid extends past the clip");
  }
  Eigen::VectorXd window(static_cast<Eigen::Index>(grid.length));
  const double denom = grid.length > 1 ? static_cast<double>(grid.length - 1) : 1.0;
  for (Eigen::Index i = 0; i < window.size(); ++i) {
    window(i) = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
  }
  std::vector<double> buffer(grid.length);
  for (std::size_t f = 0; f < grid.count; ++f) {
    const std::size_t start = f * grid.hop;
    for (std::size_t n = 0; n < grid.length; ++n) {
      const double prev = start + n > 0 ? clip.samples[start + n - 1] : 0.0;
      buffer[n] = (clip.samples[start + n] - options.pre_emphasis * prev) *
                  window(static_cast<Eigen::Index>(n));
    }
    try {
      track[f] = formants_from_lpc(lpc_coeffs(buffer, options.lpc_order), clip.sample_rate);
    } catch (const NumericalError&) {
      track[f] = FormantFrame{};
    }
  }
  return track;
}

FormantTrack track_formants(const AudioClip& clip, const FeatureSequence& companion,
                            const FormantOptions& options) {
  if (clip.sample_rate != companion.sample_rate) {
    throw InputError("track_formants: sample rate differs from the companion sequence");
  }
  FrameGrid grid = FrameGrid::make(clip.samples.size(), clip.sample_rate, companion.frame_shift,
                                   companion.frame_length);
  if (grid.count != static_cast<std::size_t>(companion.size())) {
    throw InputError("track_formants: clip length does not match the companion sequence");
  }
  return track_formants(clip, grid, options);
}

void write_formant_csv(std::ostream& out, const FormantTrack& track) {
  out << "frame,f1,b1,f2,b2,f3,b3,f4,b4,valid\n";
  char cell[64];
  for (std::size_t i = 0; i < track.size(); ++i) {
    out << i;
    const auto& frame = track[i];
    for (int k = 0; k < kFormantCount; ++k) {
      if (frame.valid) {
        const auto& fm = frame.formants[static_cast<std::size_t>(k)];
        std::snprintf(cell, sizeof(cell), ",%.3f,%.3f", fm.frequency, fm.bandwidth);
        out << cell;
      } else {
        out << ",,";
      }
    }
    out << ',' << (frame.valid ? 1 : 0) << '\n';
  }
}

}  // namespace formeq
