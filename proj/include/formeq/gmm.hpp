#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <vector>

#include "formeq/formants.hpp"

namespace formeq {

struct EmOptions {
  int components = 32;
  std::uint64_t seed = 0;
  int max_iter = 100;
  double rel_tol = 1e-6;
  int kmeans_iter = 20;
};

/// Per-run diagnostics from train_em.
struct EmTrace {
  std::vector<double> log_likelihood;  // total log-likelihood before each M-step
  int flooring_events = 0;
  bool converged = false;
};

struct ConversionResult {
  Eigen::MatrixXd converted;   // Dy x N
  Eigen::MatrixXd posteriors;  // Q x N, columns sum to 1
};

/// Full-covariance Gaussian mixture over stacked vectors z = [x; y] with
/// x of size dx. Conversion uses the per-component conditional mean
///   E[y | x, q] = mu_q^y + S_q^yx (S_q^xx)^-1 (x - mu_q^x)
/// weighted by the posterior of q computed from the x-marginal.
class JointGmm {
 public:
  JointGmm(Eigen::VectorXd priors, std::vector<Eigen::VectorXd> means,
           std::vector<Eigen::MatrixXd> covariances, Eigen::Index dx);

  Eigen::Index components() const { return priors_.size(); }
  Eigen::Index dx() const { return dx_; }
  Eigen::Index dy() const { return dim() - dx_; }
  Eigen::Index dim() const { return means_.front().size(); }

  const Eigen::VectorXd& priors() const { return priors_; }
  const Eigen::VectorXd& mean(Eigen::Index q) const { return means_[static_cast<std::size_t>(q)]; }
  const Eigen::MatrixXd& covariance(Eigen::Index q) const { return covariances_[static_cast<std::size_t>(q)]; }

  Eigen::VectorXd posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd component_regression(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index q) const;
  Eigen::VectorXd convert(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Frames are columns of `x`; each is converted independently.
  ConversionResult convert_frames(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// Total joint log-likelihood of the columns of z.
  double log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& z) const;

  friend bool operator==(const JointGmm& a, const JointGmm& b) {
    return a.dx_ == b.dx_ && a.priors_ == b.priors_ && a.means_ == b.means_ &&
           a.covariances_ == b.covariances_;
  }

 private:
  Eigen::VectorXd priors_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  Eigen::Index dx_;

  // Cached from the x-marginal of each component.
  std::vector<Eigen::LLT<Eigen::MatrixXd>> xx_factor_;
  std::vector<double> xx_log_norm_;
  std::vector<Eigen::MatrixXd> regression_;  // S^yx (S^xx)^-1
};

/// log N(z; mean, L L^T) for every column of z, given the Cholesky factor.
Eigen::VectorXd gaussian_log_density(const Eigen::Ref<const Eigen::MatrixXd>& z,
                                     const Eigen::Ref<const Eigen::VectorXd>& mean,
                                     const Eigen::LLT<Eigen::MatrixXd>& factor);

/// EM for a joint-density GMM on column-paired x (dx x N) and y (dy x N).
/// k-means++ seeding, Lloyd refinement, then full-covariance EM until the
/// relative log-likelihood gain falls below rel_tol. A covariance whose
/// Cholesky factorisation fails gets eps added to its diagonal (only the y
/// block when S^xx is already positive definite), eps = 1e-6 trace/dim.
/// A floored component update that would lower the expected complete-data
/// log-likelihood is discarded and the component keeps its previous
/// parameters, so the recorded log-likelihood never decreases.
JointGmm train_em(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& y,
                  const EmOptions& options, EmTrace* trace = nullptr);

nlohmann::json gmm_to_json(const JointGmm& gmm);
JointGmm gmm_from_json(const nlohmann::json& j);

// Formant predictor: source cepstra -> target [f1..f4, b1..b4].

inline constexpr int kFormantGmmComponents = 8;
inline constexpr double kMinPredictedBandwidth = 10.0;
inline constexpr double kFormantSpacingHz = 1.0;

Eigen::VectorXd formant_vector(const FormantFrame& frame);

/// Clamps frequencies into [90, nyquist-100] Hz and bandwidths into
/// [10, 700] Hz, sorts by frequency and separates coincident formants by 1 Hz.
FormantFrame formant_frame_from_vector(const Eigen::Ref<const Eigen::VectorXd>& v, double nyquist);

/// Trains on the columns whose target frame is valid; the rest are skipped.
JointGmm train_formant_gmm(const Eigen::Ref<const Eigen::MatrixXd>& source,
                           const std::vector<FormantFrame>& targets, EmOptions options,
                           EmTrace* trace = nullptr);

FormantFrame predict_target_formants(const JointGmm& model, const Eigen::Ref<const Eigen::VectorXd>& source,
                                     double nyquist);

}  // namespace formeq
