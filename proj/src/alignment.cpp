#include "formeq/alignment.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

namespace formeq {

bool AlignmentPath::valid_for(Eigen::Index n, Eigen::Index m) const {
  if (steps.empty() || steps.front() != PathStep{0, 0} || steps.back() != PathStep{n - 1, m - 1}) {
    return false;
  }
  for (std::size_t k = 1; k < steps.size(); ++k) {
    const Eigen::Index di = steps[k].src - steps[k - 1].src;
    const Eigen::Index dj = steps[k].tgt - steps[k - 1].tgt;
    if (di < 0 || dj < 0 || di > 1 || dj > 1 || di + dj == 0) return false;
  }
  return true;
}

AlignmentPath dtw_align(const Eigen::Ref<const Eigen::MatrixXd>& src, const Eigen::Ref<const Eigen::MatrixXd>& tgt) {
  const Eigen::Index n = src.cols();
  const Eigen::Index m = tgt.cols();
  if (n == 0 || m == 0) throw InputError("dtw: empty sequence");
  if (src.rows() != tgt.rows()) throw InputError("dtw: dimension mismatch");
  if (src.rows() < 2) throw InputError("dtw: frames need at least c0 and c1");

  constexpr double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd acc(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      double best = 0.0;
      if (i > 0 || j > 0) {
        best = inf;
        if (i > 0 && j > 0) best = acc(i - 1, j - 1);
        if (i > 0) best = std::min(best, acc(i - 1, j));
        if (j > 0) best = std::min(best, acc(i, j - 1));
      }
      acc(i, j) = best + cepstral_distance(src.col(i), tgt.col(j));
    }
  }

  AlignmentPath path;
  path.cost = acc(n - 1, m - 1);
  Eigen::Index i = n - 1, j = m - 1;
  path.steps.push_back({i, j});
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = acc(i - 1, j - 1);
      const double up = acc(i - 1, j);
      const double left = acc(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    path.steps.push_back({i, j});
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

AlignmentPath dtw_align(const FeatureSequence& src, const FeatureSequence& tgt) {
  return dtw_align(src.frames, tgt.frames);
}

void write_alignment_csv(std::ostream& out, const AlignmentPath& path) {
  out << "src_index,tgt_index\n";
  for (const auto& s : path.steps) out << s.src << ',' << s.tgt << '\n';
}

std::vector<AlignedPair> pair_frames(const AlignmentPath& path, const UtteranceFeatures& src,
                                     const UtteranceFeatures& tgt) {
  for (const auto* u : {&src, &tgt}) {
    if (u->logspec.cols() != u->size() || static_cast<Eigen::Index>(u->formants.size()) != u->size()) {
      throw InputError("pair_frames: feature and formant track lengths differ");
    }
  }
  if (!path.valid_for(src.size(), tgt.size())) throw InputError("pair_frames: path does not fit the sequences");
  std::vector<AlignedPair> pairs;
  pairs.reserve(path.size());
  for (const auto& step : path.steps) {
    AlignedPair p;
    p.src_mcep = src.mcep.col(step.src);
    p.tgt_mcep = tgt.mcep.col(step.tgt);
    p.src_logspec = src.logspec.col(step.src);
    p.tgt_logspec = tgt.logspec.col(step.tgt);
    p.src_formants = src.formants[static_cast<std::size_t>(step.src)];
    p.tgt_formants = tgt.formants[static_cast<std::size_t>(step.tgt)];
    p.skip_warp = !p.src_formants.valid || !p.tgt_formants.valid;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace formeq
