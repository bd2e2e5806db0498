#include "formeq/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace formeq {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2 pi)
constexpr double kNegligibleWeight = 1e-200;

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Adds eps to the diagonal until the Cholesky factorisation succeeds,
// eps = 1e-6 trace/dim growing tenfold per attempt. When S^xx alone is
// positive definite only the y block is floored, which leaves the
// regression S^yx (S^xx)^-1 untouched. A collapsed (zero-trace) component
// takes its scale from `fallback_trace`.
Eigen::LLT<Eigen::MatrixXd> factor_with_floor(Eigen::MatrixXd& cov, Eigen::Index dx, double fallback_trace,
                                              int& flooring_events) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt;
  const Eigen::Index d = cov.rows();
  double eps = 1e-6 * cov.trace() / static_cast<double>(d);
  if (!(eps > 0.0)) eps = 1e-6 * fallback_trace / static_cast<double>(d);

  const bool xx_ok = Eigen::LLT<Eigen::MatrixXd>(cov.topLeftCorner(dx, dx)).info() == Eigen::Success;
  const Eigen::Index first = xx_ok ? dx : 0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    if (!(eps > 0.0) || !std::isfinite(eps)) break;
    cov.diagonal().tail(d - first).array() += eps;
    ++flooring_events;
    llt.compute(cov);
    if (llt.info() == Eigen::Success) return llt;
    eps *= 10.0;
  }
  throw NumericalError("covariance is singular and flooring failed (degenerate data?)");
}

Eigen::MatrixXd kmeans_centers(const Eigen::MatrixXd& z, int k, int iterations, std::mt19937_64& rng) {
  const Eigen::Index n = z.cols();
  Eigen::MatrixXd centers(z.rows(), k);
  Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());

  auto pick = [&](Eigen::Index c, Eigen::Index idx) {
    centers.col(c) = z.col(idx);
    nearest = nearest.cwiseMin((z.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  };

  pick(0, static_cast<Eigen::Index>(unit_uniform(rng) * static_cast<double>(n)));
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index idx = n - 1;
    if (total > 0.0) {
      const double target = unit_uniform(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (acc > target) {
          idx = i;
          break;
        }
      }
    } else {
      idx = static_cast<Eigen::Index>(unit_uniform(rng) * static_cast<double>(n));
    }
    pick(c, idx);
  }

  std::vector<Eigen::Index> assignment(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.colwise() - z.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (assignment[static_cast<std::size_t>(i)] != best) changed = true;
      assignment[static_cast<std::size_t>(i)] = best;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(z.rows(), k);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assignment[static_cast<std::size_t>(i)]) += z.col(i);
      counts(assignment[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0.0) centers.col(c) = sums.col(c) / counts(c);
    }
    if (!changed && it > 0) break;
  }
  return centers;
}

}  // namespace

Eigen::VectorXd gaussian_log_density(const Eigen::Ref<const Eigen::MatrixXd>& z,
                                     const Eigen::Ref<const Eigen::VectorXd>& mean,
                                     const Eigen::LLT<Eigen::MatrixXd>& factor) {
  const Eigen::MatrixXd& l = factor.matrixLLT();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  Eigen::MatrixXd centered = z.colwise() - mean;
  factor.matrixL().solveInPlace(centered);
  const double norm = -0.5 * (static_cast<double>(z.rows()) * kLog2Pi + log_det);
  return (norm - 0.5 * centered.colwise().squaredNorm().array()).transpose();
}

JointGmm::JointGmm(Eigen::VectorXd priors, std::vector<Eigen::VectorXd> means,
                   std::vector<Eigen::MatrixXd> covariances, Eigen::Index dx)
    : priors_(std::move(priors)), means_(std::move(means)), covariances_(std::move(covariances)), dx_(dx) {
  const auto q = static_cast<std::size_t>(priors_.size());
  if (q == 0 || means_.size() != q || covariances_.size() != q) {
    throw InputError("gmm: component counts disagree");
  }
  const Eigen::Index d = means_.front().size();
  if (dx_ < 1 || dx_ >= d) throw InputError("gmm: need 0 < dx < dim");
  if ((priors_.array() <= 0.0).any() || std::abs(priors_.sum() - 1.0) > 1e-9) {
    throw InputError("gmm: priors must be positive and sum to one");
  }
  const Eigen::Index dy = d - dx_;
  for (std::size_t k = 0; k < q; ++k) {
    const auto& cov = covariances_[k];
    if (means_[k].size() != d || cov.rows() != d || cov.cols() != d) throw InputError("gmm: dimension mismatch");
    if (!means_[k].allFinite() || !cov.allFinite()) throw InputError("gmm: non-finite parameters");
    if (!cov.isApprox(cov.transpose(), 1e-12)) throw InputError("gmm: covariance not symmetric");
    Eigen::LLT<Eigen::MatrixXd> xx(cov.topLeftCorner(dx_, dx_));
    if (xx.info() != Eigen::Success) throw NumericalError("gmm: S^xx not positive definite");
    const double log_det = 2.0 * xx.matrixLLT().diagonal().array().log().sum();
    xx_log_norm_.push_back(-0.5 * (static_cast<double>(dx_) * kLog2Pi + log_det));
    // S^yx (S^xx)^-1 = ((S^xx)^-1 S^xy)^T
    regression_.push_back(xx.solve(cov.topRightCorner(dx_, dy)).transpose());
    xx_factor_.push_back(std::move(xx));
  }
}

Eigen::VectorXd JointGmm::posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dx_) throw InputError("gmm: source dimension mismatch");
  Eigen::VectorXd log_p(components());
  for (Eigen::Index q = 0; q < components(); ++q) {
    const auto k = static_cast<std::size_t>(q);
    Eigen::VectorXd centered = x - means_[k].head(dx_);
    xx_factor_[k].matrixL().solveInPlace(centered);
    log_p(q) = std::log(priors_(q)) + xx_log_norm_[k] - 0.5 * centered.squaredNorm();
  }
  const double total = log_sum_exp(log_p);
  return (log_p.array() - total).exp();
}

Eigen::VectorXd JointGmm::component_regression(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index q) const {
  if (x.size() != dx_) throw InputError("gmm: source dimension mismatch");
  if (q < 0 || q >= components()) throw InputError("gmm: component index out of range");
  const auto k = static_cast<std::size_t>(q);
  return means_[k].tail(dy()) + regression_[k] * (x - means_[k].head(dx_));
}

Eigen::VectorXd JointGmm::convert(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd w = posterior(x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dy());
  for (Eigen::Index q = 0; q < components(); ++q) out += w(q) * component_regression(x, q);
  return out;
}

ConversionResult JointGmm::convert_frames(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != dx_) throw InputError("gmm: source dimension mismatch");
  ConversionResult result;
  result.converted.resize(dy(), x.cols());
  result.posteriors.resize(components(), x.cols());
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    result.posteriors.col(f) = posterior(x.col(f));
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dy());
    for (Eigen::Index q = 0; q < components(); ++q) {
      acc += result.posteriors(q, f) * component_regression(x.col(f), q);
    }
    result.converted.col(f) = acc;
  }
  return result;
}

double JointGmm::log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& z) const {
  if (z.rows() != dim()) throw InputError("gmm: data dimension mismatch");
  Eigen::MatrixXd log_p(components(), z.cols());
  for (Eigen::Index q = 0; q < components(); ++q) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance(q));
    log_p.row(q) = (gaussian_log_density(z, mean(q), llt).array() + std::log(priors_(q))).transpose();
  }
  double total = 0.0;
  for (Eigen::Index n = 0; n < z.cols(); ++n) total += log_sum_exp(log_p.col(n));
  return total;
}

JointGmm train_em(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& y,
                  const EmOptions& options, EmTrace* trace) {
  const int k = options.components;
  if (k < 1) throw InputError("train_em: need at least one component");
  if (x.cols() != y.cols()) throw InputError("train_em: x and y frame counts differ");
  if (x.rows() < 1 || y.rows() < 1) throw InputError("train_em: empty feature dimension");
  const Eigen::Index n = x.cols();
  if (n < 10 * static_cast<Eigen::Index>(k)) {
    throw InputError("train_em: " + std::to_string(n) + " pairs is fewer than 10 per component (" +
                     std::to_string(k) + " components)");
  }
  if (!x.allFinite() || !y.allFinite()) throw InputError("train_em: non-finite training data");

  EmTrace local;
  EmTrace& tr = trace ? *trace : local;
  tr = EmTrace{};

  const Eigen::Index d = x.rows() + y.rows();
  Eigen::MatrixXd z(d, n);
  z.topRows(x.rows()) = x;
  z.bottomRows(y.rows()) = y;

  std::mt19937_64 rng(options.seed);
  const Eigen::MatrixXd centers = kmeans_centers(z, k, options.kmeans_iter, rng);

  // Hard responsibilities from the nearest center.
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(k, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    (centers.colwise() - z.col(i)).colwise().squaredNorm().minCoeff(&best);
    resp(best, i) = 1.0;
  }

  Eigen::VectorXd priors(k);
  std::vector<Eigen::VectorXd> means(static_cast<std::size_t>(k), Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> covs(static_cast<std::size_t>(k), Eigen::MatrixXd::Identity(d, d));
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors(static_cast<std::size_t>(k));

  const Eigen::VectorXd global_mean = z.rowwise().mean();
  const Eigen::MatrixXd global_centered = z.colwise() - global_mean;
  const Eigen::MatrixXd global_cov = global_centered * global_centered.transpose() / static_cast<double>(n);

  auto m_step = [&](bool initial) {
    int floor_events = 0;
    const std::vector<Eigen::VectorXd> old_means = means;
    const std::vector<Eigen::MatrixXd> old_covs = covs;
    for (int q = 0; q < k; ++q) {
      const auto s = static_cast<std::size_t>(q);
      const double mass = resp.row(q).sum();
      if (mass < 1e-10 * static_cast<double>(n) || (initial && mass < 2.0)) {
        // Starved component: keep (or seed) its shape, give it a vanishing prior.
        if (initial) {
          means[s] = centers.col(q);
          covs[s] = global_cov;
        }
        priors(q) = std::max(mass, 1e-10) / static_cast<double>(n);
        ++floor_events;
      } else {
        means[s] = z * resp.row(q).transpose() / mass;
        const Eigen::MatrixXd scaled =
            ((z.colwise() - means[s]).array().rowwise() * resp.row(q).array().sqrt()).matrix();
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        cov.selfadjointView<Eigen::Lower>().rankUpdate(scaled, 1.0 / mass);
        covs[s] = cov.selfadjointView<Eigen::Lower>();
        priors(q) = mass / static_cast<double>(n);
      }
      if (initial) {
        factors[s] = factor_with_floor(covs[s], x.rows(), global_cov.trace(), floor_events);
        continue;
      }
      const int before = floor_events;
      Eigen::LLT<Eigen::MatrixXd> factor = factor_with_floor(covs[s], x.rows(), global_cov.trace(), floor_events);
      // A floored update is not the Q maximiser; keep it only if Q does not drop.
      if (floor_events > before && resp.row(q).dot(gaussian_log_density(z, means[s], factor)) <
                                       resp.row(q).dot(gaussian_log_density(z, old_means[s], factors[s]))) {
        means[s] = old_means[s];
        covs[s] = old_covs[s];
      } else {
        factors[s] = std::move(factor);
      }
    }
    priors /= priors.sum();
    tr.flooring_events += floor_events;
    return floor_events;
  };

  int last_floors = m_step(true);
  Eigen::MatrixXd log_p(k, n);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    for (int q = 0; q < k; ++q) {
      const auto s = static_cast<std::size_t>(q);
      log_p.row(q) = (gaussian_log_density(z, means[s], factors[s]).array() + std::log(priors(q))).transpose();
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = log_sum_exp(log_p.col(i));
      if (!std::isfinite(norm)) throw NumericalError("train_em: non-finite log-likelihood");
      // Negligible responsibilities are zeroed; subnormals would stall the M-step products.
      resp.col(i) = (log_p.col(i).array() - norm).exp();
      resp.col(i) = (resp.col(i).array() < kNegligibleWeight).select(0.0, resp.col(i));
      ll += norm;
    }
    if (!tr.log_likelihood.empty()) {
      const double prev = tr.log_likelihood.back();
      const double slack = 1e-9 * std::max(1.0, std::abs(prev));
      if (ll < prev - slack && last_floors == 0) {
        throw NumericalError("train_em: log-likelihood decreased without a flooring event");
      }
      tr.log_likelihood.push_back(ll);
      // A drop caused by flooring is not convergence.
      if (ll >= prev - slack && ll - prev < options.rel_tol * std::abs(prev)) {
        tr.converged = true;
        break;
      }
    } else {
      tr.log_likelihood.push_back(ll);
    }
    last_floors = m_step(false);
  }

  return JointGmm(std::move(priors), std::move(means), std::move(covs), x.rows());
}

nlohmann::json gmm_to_json(const JointGmm& gmm) {
  using nlohmann::json;
  json means = json::array();
  json covs = json::array();
  for (Eigen::Index q = 0; q < gmm.components(); ++q) {
    const auto& mu = gmm.mean(q);
    means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cov = gmm.covariance(q);
    covs.push_back(std::vector<double>(cov.data(), cov.data() + cov.size()));
  }
  const auto& p = gmm.priors();
  return json{{"version", 1},
              {"Q", gmm.components()},
              {"Dx", gmm.dx()},
              {"Dy", gmm.dy()},
              {"priors", std::vector<double>(p.data(), p.data() + p.size())},
              {"means", std::move(means)},
              {"covariances", std::move(covs)}};
}

JointGmm gmm_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw InputError("gmm: unsupported model version");
    const auto q = j.at("Q").get<Eigen::Index>();
    const auto dx = j.at("Dx").get<Eigen::Index>();
    const auto dy = j.at("Dy").get<Eigen::Index>();
    const Eigen::Index d = dx + dy;
    const auto priors = j.at("priors").get<std::vector<double>>();
    const auto& jm = j.at("means");
    const auto& jc = j.at("covariances");
    if (static_cast<Eigen::Index>(priors.size()) != q || static_cast<Eigen::Index>(jm.size()) != q ||
        static_cast<Eigen::Index>(jc.size()) != q) {
      throw InputError("gmm: component count mismatch in model file");
    }
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (Eigen::Index k = 0; k < q; ++k) {
      const auto mu = jm[static_cast<std::size_t>(k)].get<std::vector<double>>();
      const auto cv = jc[static_cast<std::size_t>(k)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(mu.size()) != d || static_cast<Eigen::Index>(cv.size()) != d * d) {
        throw InputError("gmm: parameter size mismatch in model file");
      }
      means.push_back(Eigen::Map<const Eigen::VectorXd>(mu.data(), d));
      covs.push_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          cv.data(), d, d));
    }
    return JointGmm(Eigen::Map<const Eigen::VectorXd>(priors.data(), q), std::move(means), std::move(covs), dx);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("gmm: malformed model json: ") + e.what());
  }
}

Eigen::VectorXd formant_vector(const FormantFrame& frame) {
  if (!frame.valid) throw InputError("formant_vector: frame is not valid");
  Eigen::VectorXd v(2 * kFormantCount);
  for (int k = 0; k < kFormantCount; ++k) {
    v(k) = frame.formants[static_cast<std::size_t>(k)].frequency;
    v(kFormantCount + k) = frame.formants[static_cast<std::size_t>(k)].bandwidth;
  }
  return v;
}

FormantFrame formant_frame_from_vector(const Eigen::Ref<const Eigen::VectorXd>& v, double nyquist) {
  if (v.size() != 2 * kFormantCount) throw InputError("formant vector must hold 4 frequencies and 4 bandwidths");
  const double lo = kMinFormantHz;
  const double hi = nyquist - kNyquistMarginHz;
  auto clamp = [](double value, double a, double b) { return std::isfinite(value) ? std::clamp(value, a, b) : a; };

  FormantFrame frame;
  for (int k = 0; k < kFormantCount; ++k) {
    frame.formants.push_back({clamp(v(k), lo, hi),
                              clamp(v(kFormantCount + k), kMinPredictedBandwidth, kMaxBandwidthHz)});
  }
  std::stable_sort(frame.formants.begin(), frame.formants.end(),
                   [](const Formant& a, const Formant& b) { return a.frequency < b.frequency; });
  for (std::size_t k = 1; k < frame.formants.size(); ++k) {
    auto& f = frame.formants[k].frequency;
    f = std::max(f, frame.formants[k - 1].frequency + kFormantSpacingHz);
  }
  for (std::size_t k = frame.formants.size(); k-- > 0;) {
    const double ceiling = hi - kFormantSpacingHz * static_cast<double>(frame.formants.size() - 1 - k);
    frame.formants[k].frequency = std::min(frame.formants[k].frequency, ceiling);
  }
  frame.valid = true;
  return frame;
}

JointGmm train_formant_gmm(const Eigen::Ref<const Eigen::MatrixXd>& source, const std::vector<FormantFrame>& targets,
                           EmOptions options, EmTrace* trace) {
  if (static_cast<Eigen::Index>(targets.size()) != source.cols()) {
    throw InputError("train_formant_gmm: source and target counts differ");
  }
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].valid) keep.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd x(source.rows(), static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd y(2 * kFormantCount, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    x.col(static_cast<Eigen::Index>(c)) = source.col(keep[c]);
    y.col(static_cast<Eigen::Index>(c)) = formant_vector(targets[static_cast<std::size_t>(keep[c])]);
  }
  return train_em(x, y, options, trace);
}

FormantFrame predict_target_formants(const JointGmm& model, const Eigen::Ref<const Eigen::VectorXd>& source,
                                     double nyquist) {
  if (model.dy() != 2 * kFormantCount) throw InputError("predict_target_formants: model is not a formant GMM");
  return formant_frame_from_vector(model.convert(source), nyquist);
}

}  // namespace formeq
