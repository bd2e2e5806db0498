#pragma once

#include <Eigen/Core>

#include <cmath>
#include <iosfwd>
#include <optional>

#include "formeq/error.hpp"

namespace formeq {

inline constexpr double kDefaultSigma = 0.1;
inline constexpr double kConsistencyFloor = 1e-12;
inline constexpr double kMinNeighborhoodWeight = 1e-12;
inline constexpr double kNegligibleWeight = 1e-200;

/// Gaussian locality weights w_i = exp(-|x_i - query|^2 / (2 sigma^2)) for the columns of X.
template <typename Derived>
Eigen::VectorXd kernel_weights(const Eigen::MatrixBase<Derived>& query, const Eigen::Ref<const Eigen::MatrixXd>& X,
                               double sigma) {
  if (!(sigma > 0.0)) throw InputError("kernel_weights: sigma must be positive");
  if (query.size() != X.rows()) throw InputError("kernel_weights: dimension mismatch");
  const double scale = -0.5 / (sigma * sigma);
  return ((X.colwise() - query.derived()).colwise().squaredNorm().array() * scale).exp().transpose();
}

/// Locality-weighted covariance of the columns of Y around `query` in X-space,
/// centred on the weighted mean of Y. Empty when the total weight is at most
/// kMinNeighborhoodWeight.
std::optional<Eigen::MatrixXd> weighted_cov(const Eigen::Ref<const Eigen::VectorXd>& query,
                                            const Eigen::Ref<const Eigen::MatrixXd>& X,
                                            const Eigen::Ref<const Eigen::MatrixXd>& Y, double sigma);

/// Weighted covariance from precomputed weights.
std::optional<Eigen::MatrixXd> weighted_cov(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                            const Eigen::Ref<const Eigen::MatrixXd>& Y);

/// log det(cov + floor * I), computed from the eigenvalues with negatives clipped to zero.
double floored_log_det(const Eigen::Ref<const Eigen::MatrixXd>& cov, double floor = kConsistencyFloor);

/// Log-determinant of the weighted covariance; empty for an empty neighbourhood.
std::optional<double> consistency(const Eigen::Ref<const Eigen::VectorXd>& query,
                                  const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::MatrixXd>& Y, double sigma);

struct PcaProjection {
  Eigen::MatrixXd projections;  // dims x N
  Eigen::MatrixXd basis;        // D x dims, orthonormal columns by descending variance
  Eigen::VectorXd mean;         // D
  Eigen::VectorXd variances;    // dims leading eigenvalues of the (biased) covariance
};

/// Principal axes of the columns of X. Each basis vector is signed so its
/// largest-magnitude entry is positive.
PcaProjection pca_project(const Eigen::Ref<const Eigen::MatrixXd>& X, int dims = 2);

/// Per-row z-scoring; rows with zero spread are only centred.
Eigen::MatrixXd standardize_rows(const Eigen::Ref<const Eigen::MatrixXd>& X);

enum class WeightSpace {
  projected,  // Gaussian weights in the 2-D PCA plane, coordinates scaled to a unit extent
  full,       // Gaussian weights in the full standardized source space
};

struct ComplexityOptions {
  double sigma = kDefaultSigma;
  Eigen::Index rows = 100;
  Eigen::Index cols = 100;
  WeightSpace space = WeightSpace::projected;
  bool standardize_targets = false;
};

struct GridExtent {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
};

/// Log-consistency sampled on a regular grid over the PCA plane of the
/// source vectors. Cells with an empty neighbourhood hold NaN.
struct ComplexityGrid {
  Eigen::MatrixXd values;  // rows x cols; row index follows the second PCA axis
  GridExtent extent;
  double sigma = kDefaultSigma;
  double floor = kConsistencyFloor;
  WeightSpace space = WeightSpace::projected;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::Index data_cells() const;
  /// Mean over cells that hold data; NaN when none do.
  double mean() const;
};

/// X: source vectors (Dx x N), Y: target vectors (Dy x N).
ComplexityGrid complexity_grid(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& Y,
                               const ComplexityOptions& options = {});

void write_grid_csv(std::ostream& out, const ComplexityGrid& grid);
void write_grid_json(std::ostream& out, const ComplexityGrid& grid);
/// 8-bit binary PGM with linear min-max scaling; no-data cells are black.
void write_grid_pgm(std::ostream& out, const ComplexityGrid& grid);

}  // namespace formeq
