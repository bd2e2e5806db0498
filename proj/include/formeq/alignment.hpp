#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <vector>

#include "formeq/features.hpp"
#include "formeq/formants.hpp"

namespace formeq {

struct PathStep {
  Eigen::Index src = 0;
  Eigen::Index tgt = 0;

  friend bool operator==(const PathStep&, const PathStep&) = default;
};

/// Monotone DTW path from (0,0) to (N-1,M-1); each step advances src, tgt or both by one.
struct AlignmentPath {
  std::vector<PathStep> steps;
  double cost = 0.0;

  std::size_t size() const { return steps.size(); }
  bool valid_for(Eigen::Index n, Eigen::Index m) const;
};

/// Euclidean distance between two cepstral frames ignoring c0.
template <typename DerivedA, typename DerivedB>
double cepstral_distance(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const Eigen::Index n = a.size() - 1;
  return (a.tail(n) - b.tail(n)).norm();
}

/// DTW over frame columns with steps (1,0), (0,1), (1,1) and no band constraint.
/// Backtracking ties prefer the diagonal, then the (1,0) step.
AlignmentPath dtw_align(const Eigen::Ref<const Eigen::MatrixXd>& src,
                        const Eigen::Ref<const Eigen::MatrixXd>& tgt);
AlignmentPath dtw_align(const FeatureSequence& src, const FeatureSequence& tgt);

void write_alignment_csv(std::ostream& out, const AlignmentPath& path);

/// Analysis products of one utterance on a shared frame grid.
struct UtteranceFeatures {
  Eigen::MatrixXd mcep;     // (order+1) x N
  Eigen::MatrixXd logspec;  // bins x N, spectral envelope used for warping
  FormantTrack formants;    // N frames

  Eigen::Index size() const { return mcep.cols(); }
};

struct AlignedPair {
  Eigen::VectorXd src_mcep;
  Eigen::VectorXd tgt_mcep;
  Eigen::VectorXd src_logspec;
  Eigen::VectorXd tgt_logspec;
  FormantFrame src_formants;
  FormantFrame tgt_formants;
  bool skip_warp = false;
};

/// One AlignedPair per path step; skip_warp is set when either formant frame is invalid.
std::vector<AlignedPair> pair_frames(const AlignmentPath& path, const UtteranceFeatures& src,
                                     const UtteranceFeatures& tgt);

}  // namespace formeq
