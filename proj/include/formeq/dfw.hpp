#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <vector>

#include "formeq/alignment.hpp"
#include "formeq/features.hpp"
#include "formeq/formants.hpp"

namespace formeq {

struct WarpAnchor {
  double in = 0.0;   // Hz
  double out = 0.0;  // Hz

  friend bool operator==(const WarpAnchor&, const WarpAnchor&) = default;
};

/// Monotone piecewise-linear bijection of [0, nyquist] onto itself.
/// Anchors are strictly increasing in both coordinates and the endpoints
/// (0,0) and (nyquist,nyquist) are always present.
class WarpFunction {
 public:
  WarpFunction(std::vector<WarpAnchor> anchors, double nyquist);

  static WarpFunction identity(double nyquist);

  double operator()(double f) const;
  double inverse(double f) const;

  const std::vector<WarpAnchor>& anchors() const { return anchors_; }
  double nyquist() const { return nyquist_; }
  bool is_identity() const;

  friend bool operator==(const WarpFunction&, const WarpFunction&) = default;

 private:
  std::vector<WarpAnchor> anchors_;
  double nyquist_;
};

/// Warp taking the formant layout of `from` onto that of `to`. Candidate
/// anchors are the formant centers and the bandwidth edges f +- b/2; any
/// candidate that would break strict monotonicity is dropped, scanning left
/// to right, with centers placed before edges.
WarpFunction build_warp(const FormantFrame& from, const FormantFrame& to, double nyquist);

/// Output bin at frequency f takes the input log-amplitude at w^-1(f)
/// (linear interpolation between bins). Bins span [0, w.nyquist()].
Eigen::VectorXd apply_dfw(const Eigen::Ref<const Eigen::VectorXd>& log_spectrum, const WarpFunction& w);

WarpFunction invert_warp(const WarpFunction& w);

void write_warp_csv(std::ostream& out, const WarpFunction& w);

enum class EqualizeOutcome { equalized, identity, rejected };

/// What to do with pairs whose formant frames are invalid.
enum class InvalidFormantPolicy { keep_unwarped, drop };

struct EqualizedPair {
  EqualizeOutcome outcome = EqualizeOutcome::identity;
  Eigen::VectorXd target;  // training target: warped, original, or empty when rejected
  double melcd_before = 0.0;
  double melcd_after = 0.0;
};

/// Warps the target envelope so its formants sit at the source formant
/// locations, re-extracts the mel-cepstrum (keeping the target c0), and
/// rejects the pair if warping moved it further from the source.
EqualizedPair equalize_pair(const AlignedPair& pair, const WarpedCepstrum& cepstrum, double nyquist,
                            InvalidFormantPolicy policy = InvalidFormantPolicy::keep_unwarped);

struct EqualizationReport {
  std::size_t equalized = 0;
  std::size_t identity = 0;
  std::size_t rejected = 0;
  double mean_melcd_before = 0.0;  // all aligned pairs
  double mean_melcd_after = 0.0;   // retained training pairs

  std::size_t total() const { return equalized + identity + rejected; }
  std::size_t retained() const { return equalized + identity; }
};

struct CorpusEqualization {
  Eigen::MatrixXd source;      // retained pairs, source mcep
  Eigen::MatrixXd target;      // retained pairs, equalized (or unwarped) target mcep
  Eigen::MatrixXd raw_target;  // retained pairs, original target mcep
  std::vector<FormantFrame> target_formants;  // retained pairs, measured target formants
  std::vector<EqualizeOutcome> outcomes;      // one per input pair
  EqualizationReport report;
};

CorpusEqualization equalize_corpus(const std::vector<AlignedPair>& pairs, const WarpedCepstrum& cepstrum,
                                   double nyquist,
                                   InvalidFormantPolicy policy = InvalidFormantPolicy::keep_unwarped);

void write_equalization_report(std::ostream& out, const EqualizationReport& report);

}  // namespace formeq
