#include "formeq/complexity.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <ostream>

namespace formeq {

std::optional<Eigen::MatrixXd> weighted_cov(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                            const Eigen::Ref<const Eigen::MatrixXd>& Y) {
  if (weights.size() != Y.cols()) throw InputError("weighted_cov: weight count mismatch");
  if (weights.size() > 0 && weights.minCoeff() < 0.0) throw InputError("weighted_cov: negative weight");
  const double total = weights.sum();
  if (!(total > kMinNeighborhoodWeight)) return std::nullopt;
  // Weights this small cannot affect the result but would run in subnormal arithmetic.
  const Eigen::VectorXd w = (weights.array() < kNegligibleWeight).select(0.0, weights);
  const Eigen::VectorXd mean = Y * w / total;
  const Eigen::MatrixXd scaled = ((Y.colwise() - mean).array().rowwise() * w.transpose().array().sqrt()).matrix();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(Y.rows(), Y.rows());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(scaled, 1.0 / total);
  return Eigen::MatrixXd(cov.selfadjointView<Eigen::Lower>());
}

std::optional<Eigen::MatrixXd> weighted_cov(const Eigen::Ref<const Eigen::VectorXd>& query,
                                            const Eigen::Ref<const Eigen::MatrixXd>& X,
                                            const Eigen::Ref<const Eigen::MatrixXd>& Y, double sigma) {
  if (X.cols() != Y.cols()) throw InputError("weighted_cov: X and Y counts differ");
  return weighted_cov(kernel_weights(query, X, sigma), Y);
}

double floored_log_det(const Eigen::Ref<const Eigen::MatrixXd>& cov, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("floored_log_det: eigen solver failed");
  return (solver.eigenvalues().array().max(0.0) + floor).log().sum();
}

std::optional<double> consistency(const Eigen::Ref<const Eigen::VectorXd>& query,
                                  const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  const Eigen::Ref<const Eigen::MatrixXd>& Y, double sigma) {
  const auto cov = weighted_cov(query, X, Y, sigma);
  if (!cov) return std::nullopt;
  return floored_log_det(*cov);
}

PcaProjection pca_project(const Eigen::Ref<const Eigen::MatrixXd>& X, int dims) {
  if (X.cols() == 0) throw InputError("pca: no data");
  if (dims < 1 || dims > X.rows()) throw InputError("pca: invalid number of dimensions");
  PcaProjection out;
  out.mean = X.rowwise().mean();
  const Eigen::MatrixXd centered = X.colwise() - out.mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(X.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("pca: eigen solver failed");
  // Eigenvalues come back ascending.
  const Eigen::Index d = X.rows();
  out.basis.resize(d, dims);
  out.variances.resize(dims);
  for (int k = 0; k < dims; ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - k);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0.0) v = -v;
    out.basis.col(k) = v;
    out.variances(k) = solver.eigenvalues()(d - 1 - k);
  }
  out.projections = out.basis.transpose() * centered;
  return out;
}

Eigen::MatrixXd standardize_rows(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() == 0) return X;
  const Eigen::VectorXd mean = X.rowwise().mean();
  Eigen::MatrixXd out = X.colwise() - mean;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double sd = std::sqrt(out.row(r).squaredNorm() / static_cast<double>(out.cols()));
    if (sd > 0.0) out.row(r) /= sd;
  }
  return out;
}

Eigen::Index ComplexityGrid::data_cells() const { return values.array().isFinite().count(); }

double ComplexityGrid::mean() const {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (std::isfinite(v)) {
      sum += v;
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

ComplexityGrid complexity_grid(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& Y,
                               const ComplexityOptions& options) {
  if (X.cols() != Y.cols()) throw InputError("complexity_grid: X and Y counts differ");
  if (X.cols() == 0) throw InputError("complexity_grid: no data");
  if (options.rows < 1 || options.cols < 1) throw InputError("complexity_grid: resolution must be positive");
  if (!(options.sigma > 0.0)) throw InputError("complexity_grid: sigma must be positive");

  const Eigen::MatrixXd xs = standardize_rows(X);
  const Eigen::MatrixXd ys = options.standardize_targets ? standardize_rows(Y) : Eigen::MatrixXd(Y);
  const int dims = std::min<int>(2, static_cast<int>(xs.rows()));
  PcaProjection pca = pca_project(xs, dims);
  Eigen::MatrixXd plane = Eigen::MatrixXd::Zero(2, xs.cols());
  plane.topRows(dims) = pca.projections;

  ComplexityGrid grid;
  grid.sigma = options.sigma;
  grid.space = options.space;
  grid.extent = {plane.row(0).minCoeff(), plane.row(0).maxCoeff(), plane.row(1).minCoeff(), plane.row(1).maxCoeff()};
  grid.values.resize(options.rows, options.cols);

  const auto& e = grid.extent;
  // One length scale for both axes keeps distances isotropic.
  double scale = std::max(e.x_max - e.x_min, e.y_max - e.y_min);
  if (!(scale > 0.0)) scale = 1.0;
  const Eigen::Vector2d origin(e.x_min, e.y_min);
  const Eigen::MatrixXd unit_plane = (plane.colwise() - origin) / scale;

  auto axis = [](double lo, double hi, Eigen::Index i, Eigen::Index n) {
    return n > 1 ? lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1) : 0.5 * (lo + hi);
  };

  for (Eigen::Index r = 0; r < options.rows; ++r) {
    for (Eigen::Index c = 0; c < options.cols; ++c) {
      const Eigen::Vector2d node(axis(e.x_min, e.x_max, c, options.cols), axis(e.y_min, e.y_max, r, options.rows));
      Eigen::VectorXd w;
      if (options.space == WeightSpace::projected) {
        const Eigen::Vector2d q = (node - origin) / scale;
        w = kernel_weights(q, unit_plane, options.sigma);
      } else {
        const Eigen::VectorXd q = pca.mean + pca.basis * node.head(dims);
        w = kernel_weights(q, xs, options.sigma);
      }
      const auto cov = weighted_cov(w, ys);
      grid.values(r, c) = cov ? floored_log_det(*cov) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return grid;
}

void write_grid_csv(std::ostream& out, const ComplexityGrid& grid) {
  char cell[40];
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      if (c > 0) out << ',';
      const double v = grid.values(r, c);
      if (std::isfinite(v)) {
        std::snprintf(cell, sizeof(cell), "%.10g", v);
        out << cell;
      }
    }
    out << '\n';
  }
}

void write_grid_json(std::ostream& out, const ComplexityGrid& grid) {
  const nlohmann::json j = {
      {"extent", {{"x_min", grid.extent.x_min}, {"x_max", grid.extent.x_max},
                  {"y_min", grid.extent.y_min}, {"y_max", grid.extent.y_max}}},
      {"resolution", {grid.rows(), grid.cols()}},
      {"sigma", grid.sigma},
      {"floor", grid.floor},
      {"weight_space", grid.space == WeightSpace::projected ? "projected" : "full"},
      {"data_cells", grid.data_cells()},
      {"mean", grid.data_cells() > 0 ? nlohmann::json(grid.mean()) : nlohmann::json(nullptr)}};
  out << j.dump(2) << '\n';
}

void write_grid_pgm(std::ostream& out, const ComplexityGrid& grid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < grid.values.size(); ++i) {
    const double v = grid.values.data()[i];
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  out << "P5\n" << grid.cols() << ' ' << grid.rows() << "\n255\n";
  // PGM rows run top to bottom; flip so the second axis grows upwards.
  for (Eigen::Index r = grid.rows(); r-- > 0;) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      const double v = grid.values(r, c);
      unsigned char px = 0;
      if (std::isfinite(v)) {
        px = hi > lo ? static_cast<unsigned char>(std::lround(1.0 + 254.0 * (v - lo) / (hi - lo))) : 128;
      }
      out.put(static_cast<char>(px));
    }
  }
}

}  // namespace formeq
