#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "formeq/complexity.hpp"

using namespace formeq;

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Eigen::MatrixXd naive_weighted_cov(const Eigen::VectorXd& w, const Eigen::MatrixXd& y) {
  const double total = w.sum();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(y.rows());
  for (Eigen::Index i = 0; i < y.cols(); ++i) mean += w(i) * y.col(i);
  mean /= total;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(y.rows(), y.rows());
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    const Eigen::VectorXd c = y.col(i) - mean;
    cov += w(i) * c * c.transpose();
  }
  return cov / total;
}

ComplexityOptions small_grid(Eigen::Index n = 12) {
  ComplexityOptions o;
  o.rows = n;
  o.cols = n;
  return o;
}

}  // namespace

TEST_CASE("kernel weights") {
  Eigen::MatrixXd x(2, 4);
  x << 0.0, 0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.3;
  const Eigen::VectorXd w = kernel_weights(Eigen::Vector2d::Zero(), x, 0.1);
  CHECK(w(0) == 1.0);
  CHECK(w(1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(w(2) < w(1));
  CHECK(w(3) < w(2));
  CHECK_THROWS_AS(kernel_weights(Eigen::Vector2d::Zero(), x, 0.0), InputError);
  CHECK_THROWS_AS(kernel_weights(Eigen::Vector3d::Zero(), x, 0.1), InputError);
}

TEST_CASE("weighted covariance matches the direct sum") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd y = gaussian_matrix(4, 30, rng);
    Eigen::VectorXd w(30);
    for (auto& v : w) v = u(rng);
    const auto got = weighted_cov(w, y);
    REQUIRE(got.has_value());
    CHECK((*got - naive_weighted_cov(w, y)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(got->isApprox(got->transpose(), 0.0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(*got);
    CHECK(eig.eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("huge sigma gives the biased sample covariance") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = gaussian_matrix(3, 40, rng);
  const Eigen::MatrixXd y = gaussian_matrix(2, 40, rng);
  const auto got = weighted_cov(Eigen::Vector3d::Zero(), x, y, 1e6);
  REQUIRE(got.has_value());
  const Eigen::MatrixXd c = y.colwise() - y.rowwise().mean();
  CHECK((*got - c * c.transpose() / 40.0).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("identical targets give zero covariance and the floor") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = gaussian_matrix(2, 25, rng);
  const Eigen::MatrixXd y = Eigen::Vector3d(1.0, -2.0, 0.5).replicate(1, 25);
  const auto cov = weighted_cov(x.col(0), x, y, 0.5);
  REQUIRE(cov.has_value());
  CHECK(cov->cwiseAbs().maxCoeff() < 1e-15);
  const auto c = consistency(x.col(0), x, y, 0.5);
  REQUIRE(c.has_value());
  CHECK(*c == doctest::Approx(3.0 * std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("empty neighbourhoods have no value") {
  Eigen::MatrixXd x(1, 3);
  x << 0.0, 0.1, 0.2;
  const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(2, 3);
  CHECK_FALSE(weighted_cov(Eigen::VectorXd::Constant(1, 50.0), x, y, 0.1).has_value());
  CHECK_FALSE(weighted_cov(Eigen::VectorXd::Zero(3), y).has_value());
  CHECK_THROWS_AS(weighted_cov(Eigen::VectorXd::Constant(3, -1.0), y), InputError);
  CHECK_THROWS_AS(weighted_cov(Eigen::VectorXd::Zero(2), y), InputError);
}

TEST_CASE("floored log determinant") {
  CHECK(floored_log_det(Eigen::MatrixXd::Zero(4, 4)) == doctest::Approx(4 * std::log(1e-12)).epsilon(1e-12));
  Eigen::Matrix2d d = Eigen::Vector2d(2.0, 3.0).asDiagonal();
  CHECK(floored_log_det(d) == doctest::Approx(std::log(6.0)).epsilon(1e-10));
  // Tiny negative eigenvalues from rounding are clipped before the floor.
  Eigen::Matrix2d neg = Eigen::Vector2d(-1e-15, 1.0).asDiagonal();
  CHECK(floored_log_det(neg) == doctest::Approx(std::log(1e-12)).epsilon(1e-6));
}

TEST_CASE("isotropic unit-variance targets score near zero") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x = gaussian_matrix(2, 20000, rng);
  const Eigen::MatrixXd y = gaussian_matrix(3, 20000, rng);
  const auto c = consistency(Eigen::Vector2d::Zero(), x, y, 0.5);
  REQUIRE(c.has_value());
  CHECK(std::abs(*c) < 0.2 * 3);
}

TEST_CASE("a one-to-many neighbourhood is more complex than a consistent one") {
  std::mt19937_64 rng(5);
  const Eigen::Index n = 400;
  const Eigen::MatrixXd x = 0.05 * gaussian_matrix(2, n, rng);
  Eigen::MatrixXd consistent = 0.1 * gaussian_matrix(2, n, rng);
  consistent.row(0).array() += 1.0;
  Eigen::MatrixXd split = consistent;
  for (Eigen::Index i = 0; i < n; i += 2) split(0, i) = -1.0 + (split(0, i) - 1.0);
  const auto a = consistency(Eigen::Vector2d::Zero(), x, consistent, 0.1);
  const auto b = consistency(Eigen::Vector2d::Zero(), x, split, 0.1);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(*b > *a);
}

TEST_CASE("pca on a line") {
  Eigen::MatrixXd x(3, 50);
  for (Eigen::Index i = 0; i < 50; ++i) x.col(i) = Eigen::Vector3d(1.0, 2.0, -2.0) * (i - 24.5) / 3.0;
  const PcaProjection p = pca_project(x, 2);
  CHECK(p.variances(1) < 1e-10 * p.variances(0));
  CHECK(std::abs(std::abs(p.basis.col(0).dot(Eigen::Vector3d(1.0, 2.0, -2.0) / 3.0)) - 1.0) < 1e-12);
  CHECK((p.basis.transpose() * p.basis - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pca agrees with the covariance eigendecomposition") {
  std::mt19937_64 rng(6);
  Eigen::MatrixXd mix(4, 4);
  mix << 3, 0, 0, 0, 1, 2, 0, 0, 0, 0, 1, 0, 0.5, 0, 0, 0.3;
  const Eigen::MatrixXd x = mix * gaussian_matrix(4, 500, rng);
  const PcaProjection p = pca_project(x, 2);
  const Eigen::MatrixXd c = x.colwise() - x.rowwise().mean();
  const Eigen::MatrixXd cov = c * c.transpose() / 500.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  CHECK(p.variances(0) == doctest::Approx(eig.eigenvalues()(3)).epsilon(1e-10));
  CHECK(p.variances(1) == doctest::Approx(eig.eigenvalues()(2)).epsilon(1e-10));
  CHECK((p.projections - p.basis.transpose() * c).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index k = 0; k < 2; ++k) {
    Eigen::Index at = 0;
    p.basis.col(k).cwiseAbs().maxCoeff(&at);
    CHECK(p.basis(at, k) > 0.0);
    CHECK((cov * p.basis.col(k) - p.variances(k) * p.basis.col(k)).norm() < 1e-9);
  }
  CHECK_THROWS_AS(pca_project(x, 5), InputError);
}

TEST_CASE("standardize rows") {
  Eigen::MatrixXd x(2, 4);
  x << 1, 2, 3, 4, 5, 5, 5, 5;
  const Eigen::MatrixXd s = standardize_rows(x);
  CHECK(std::abs(s.row(0).mean()) < 1e-15);
  CHECK(s.row(0).squaredNorm() / 4.0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.row(1).isZero());
}

TEST_CASE("scaling the targets shifts every cell by 2 Dy log c") {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd x = gaussian_matrix(5, 300, rng);
  const Eigen::MatrixXd y = x.topRows(3).array().sin().matrix() + 0.3 * gaussian_matrix(3, 300, rng);
  const ComplexityGrid a = complexity_grid(x, y, small_grid());
  const ComplexityGrid b = complexity_grid(x, 2.0 * y, small_grid());
  REQUIRE(a.data_cells() > 0);
  CHECK(a.data_cells() == b.data_cells());
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    const double va = a.values.data()[i], vb = b.values.data()[i];
    if (!std::isfinite(va)) continue;
    CHECK(vb - va == doctest::Approx(6.0 * std::log(2.0)).epsilon(1e-6));
  }
}

TEST_CASE("grid is invariant to frame order") {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd x = gaussian_matrix(4, 200, rng);
  const Eigen::MatrixXd y = gaussian_matrix(2, 200, rng) + x.topRows(2);
  const Eigen::MatrixXd xr = x.rowwise().reverse(), yr = y.rowwise().reverse();
  const ComplexityGrid a = complexity_grid(x, y, small_grid());
  const ComplexityGrid b = complexity_grid(xr, yr, small_grid());
  CHECK(a.data_cells() == b.data_cells());
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    if (std::isfinite(a.values.data()[i])) CHECK(std::abs(a.values.data()[i] - b.values.data()[i]) < 1e-8);
  }
}

TEST_CASE("single source point") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(2, 1);
  const ComplexityGrid g = complexity_grid(x, y, small_grid(4));
  CHECK(g.data_cells() == 16);
  CHECK(g.mean() == doctest::Approx(2.0 * std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("grid shape, sentinels and input checks") {
  std::mt19937_64 rng(9);
  // Two far-apart clumps leave empty cells between them.
  Eigen::MatrixXd x = 0.01 * gaussian_matrix(2, 100, rng);
  x.rightCols(50).array() += 10.0;
  const Eigen::MatrixXd y = gaussian_matrix(2, 100, rng);
  ComplexityOptions o;
  o.rows = 7;
  o.cols = 9;
  o.sigma = 0.02;
  const ComplexityGrid g = complexity_grid(x, y, o);
  CHECK(g.rows() == 7);
  CHECK(g.cols() == 9);
  CHECK(g.data_cells() > 0);
  CHECK(g.data_cells() < 63);
  CHECK(std::isfinite(g.mean()));

  CHECK_THROWS_AS(complexity_grid(x, y.leftCols(10)), InputError);
  CHECK_THROWS_AS(complexity_grid(Eigen::MatrixXd(2, 0), Eigen::MatrixXd(2, 0)), InputError);
  o.sigma = -1.0;
  CHECK_THROWS_AS(complexity_grid(x, y, o), InputError);
}

TEST_CASE("grid writers") {
  ComplexityGrid g;
  g.values.resize(2, 3);
  g.values << 1.0, 2.0, std::nan(""), -1.5, 0.0, 3.0;
  g.extent = {-1.0, 1.0, 0.0, 2.0};

  std::ostringstream csv;
  write_grid_csv(csv, g);
  CHECK(csv.str() == "1,2,\n-1.5,0,3\n");

  std::ostringstream js;
  write_grid_json(js, g);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["data_cells"] == 5);
  CHECK(j["resolution"][0] == 2);
  CHECK(j["resolution"][1] == 3);
  CHECK(j["extent"]["x_min"] == -1.0);
  CHECK(j["mean"].get<double>() == doctest::Approx(0.9));

  std::ostringstream pgm;
  write_grid_pgm(pgm, g);
  const std::string s = pgm.str();
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(s.size() == header.size() + 6);
  CHECK(s.substr(0, header.size()) == header);
  // Bottom grid row is written first.
  CHECK(static_cast<unsigned char>(s[header.size()]) == 1);
  CHECK(static_cast<unsigned char>(s[header.size() + 5]) == 0);
  CHECK(static_cast<unsigned char>(s[header.size() + 2]) == 255);
}
