#pragma once

// Gaussian mixture fitted by EM, and the max-responsibility typicality filter.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curatekit/binary_io.hpp"
#include "curatekit/core.hpp"
#include "curatekit/distance.hpp"
#include "curatekit/kmeans.hpp"

namespace curatekit {

enum class CovarianceType { Diagonal, Full };

inline std::string_view to_string(CovarianceType c) { return c == CovarianceType::Full ? "full" : "diagonal"; }

inline CovarianceType parse_covariance(std::string_view s) {
  if (s == "diagonal" || s == "diag") return CovarianceType::Diagonal;
  if (s == "full") return CovarianceType::Full;
  throw ValidationError("unknown covariance type '" + std::string(s) + "'");
}

struct GmmOptions {
  std::size_t k = 5;
  CovarianceType covariance = CovarianceType::Diagonal;
  double reg_eps = 1e-6;  // lower bound on every covariance eigenvalue
  std::size_t max_iterations = 200;
  double tolerance = 1e-4;  // relative change of the log-likelihood
  std::uint64_t seed = 1234;
};

class GmmModel {
 public:
  CovarianceType covariance = CovarianceType::Diagonal;
  double reg_eps = 1e-6;
  std::vector<double> weights;
  RowMatrixD means;                        // K x d
  RowMatrixD variances;                    // K x d (diagonal)
  std::vector<Eigen::MatrixXd> covs;       // K of d x d (full)
  std::vector<double> log_likelihood;      // mean per-sample value after each E-step
  std::size_t iterations = 0;
  bool converged = false;
  double tau = std::numeric_limits<double>::quiet_NaN();  // stored acceptance threshold, if any

  std::size_t k() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(means.cols()); }

  /// Recomputes the cached factorizations after parameters change.
  void prepare() {
    const auto kk = static_cast<Eigen::Index>(k());
    const double d = static_cast<double>(dim());
    log_norm_.assign(k(), 0.0);
    chol_.clear();
    for (Eigen::Index c = 0; c < kk; ++c) {
      double logdet = 0.0;
      if (covariance == CovarianceType::Diagonal) {
        logdet = variances.row(c).array().log().sum();
      } else {
        chol_.emplace_back(covs[static_cast<std::size_t>(c)]);
        if (chol_.back().info() != Eigen::Success) throw ValidationError("gmm: covariance is not positive definite");
        const Eigen::MatrixXd l = chol_.back().matrixL();
        logdet = 2.0 * l.diagonal().array().log().sum();
      }
      log_norm_[static_cast<std::size_t>(c)] =
          std::log(weights[static_cast<std::size_t>(c)]) - 0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet);
    }
  }

  /// n x K matrix of log(pi_k N(x | mu_k, Sigma_k)).
  RowMatrixD log_joint(const RowMatrixD& x) const {
    if (x.cols() != means.cols()) throw ValidationError("gmm: input dim mismatch");
    RowMatrixD out(x.rows(), static_cast<Eigen::Index>(k()));
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const RowMatrixD diff = x.rowwise() - means.row(c);
      Eigen::VectorXd quad;
      if (covariance == CovarianceType::Diagonal) {
        quad = (diff.array().square().rowwise() * variances.row(c).array().inverse()).rowwise().sum();
      } else {
        const Eigen::MatrixXd z = chol_[static_cast<std::size_t>(c)].matrixL().solve(diff.transpose());
        quad = z.colwise().squaredNorm().transpose();
      }
      out.col(c) = (-0.5 * quad.array() + log_norm_[static_cast<std::size_t>(c)]).matrix();
    }
    return out;
  }

  /// Normalizes log-joint rows into responsibilities; returns per-row log p(x).
  static Eigen::VectorXd normalize_rows(RowMatrixD& lj) {
    Eigen::VectorXd lse(lj.rows());
    for (Eigen::Index i = 0; i < lj.rows(); ++i) {
      const double m = lj.row(i).maxCoeff();
      const double s = std::log((lj.row(i).array() - m).exp().sum()) + m;
      lse[i] = s;
      lj.row(i) = (lj.row(i).array() - s).exp();
    }
    return lse;
  }

  RowMatrixD responsibilities(const Matrix& x) const {
    RowMatrixD lj = log_joint(as_eigen(x).cast<double>());
    normalize_rows(lj);
    return lj;
  }

  std::vector<double> responsibilities(std::span<const float> x) const {
    RowMatrixD row(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
    RowMatrixD lj = log_joint(row);
    normalize_rows(lj);
    return {lj.data(), lj.data() + lj.size()};
  }

  /// S(x) = max_k gamma_k(x), one per row.
  std::vector<double> typicality(const Matrix& x) const {
    const RowMatrixD g = responsibilities(x);
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.row(static_cast<Eigen::Index>(i)).maxCoeff();
    return out;
  }

  double typicality(std::span<const float> x) const {
    const auto g = responsibilities(x);
    return *std::max_element(g.begin(), g.end());
  }

  /// Per-row log p(x).
  std::vector<double> log_density(const Matrix& x) const {
    RowMatrixD lj = log_joint(as_eigen(x).cast<double>());
    const Eigen::VectorXd l = normalize_rows(lj);
    return {l.data(), l.data() + l.size()};
  }

  void save(const std::filesystem::path& path) const;
  static GmmModel load(const std::filesystem::path& path);

 private:
  std::vector<double> log_norm_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;
};

namespace detail {

// Eigenvalue floor: the maximizer of the Gaussian likelihood term subject to
// Sigma >= eps * I.
inline Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& s, double eps) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(eps);
  Eigen::MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

inline void m_step(GmmModel& g, const RowMatrixD& x, const RowMatrixD& resp) {
  const auto n = static_cast<double>(x.rows());
  const Eigen::VectorXd nk = resp.colwise().sum().transpose();
  for (Eigen::Index c = 0; c < resp.cols(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    g.weights[ci] = nk[c] / n;
    // A component that lost all its mass keeps its shape.
    if (nk[c] <= std::numeric_limits<double>::min()) continue;
    g.means.row(c) = (resp.col(c).transpose() * x) / nk[c];
    const RowMatrixD diff = x.rowwise() - g.means.row(c);
    if (g.covariance == CovarianceType::Diagonal) {
      g.variances.row(c) =
          ((resp.col(c).transpose() * diff.array().square().matrix()) / nk[c]).array().cwiseMax(g.reg_eps);
    } else {
      const Eigen::MatrixXd s = (diff.transpose() * resp.col(c).asDiagonal() * diff) / nk[c];
      g.covs[ci] = floor_eigenvalues(s, g.reg_eps);
    }
  }
  const double total = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
  for (auto& w : g.weights) w /= total;
}

}  // namespace detail

/// EM from a k-means++ hard assignment. Stops when the relative change of the
/// mean log-likelihood falls below `tolerance` or after `max_iterations`.
inline GmmModel fit_gmm(const Matrix& vectors, const GmmOptions& opt = {}) {
  const std::size_t n = vectors.rows();
  if (opt.k == 0) throw ValidationError("fit_gmm: K must be >= 1");
  if (opt.k > n) {
    throw ValidationError("fit_gmm: K=" + std::to_string(opt.k) + " exceeds sample count " + std::to_string(n));
  }
  if (!all_finite(vectors.values())) throw ValidationError("fit_gmm: non-finite input");
  if (!(opt.reg_eps > 0.0)) throw ValidationError("fit_gmm: reg_eps must be positive");

  const RowMatrixD x = as_eigen(vectors).cast<double>();
  const auto d = x.cols();
  const auto kk = static_cast<Eigen::Index>(opt.k);
  GmmModel g;
  g.covariance = opt.covariance;
  g.reg_eps = opt.reg_eps;
  g.weights.assign(opt.k, 1.0 / static_cast<double>(opt.k));
  g.means = RowMatrixD::Zero(kk, d);
  if (opt.covariance == CovarianceType::Diagonal) {
    g.variances = RowMatrixD::Ones(kk, d);
  } else {
    g.covs.assign(opt.k, Eigen::MatrixXd::Identity(d, d));
  }

  const auto init = kmeans(vectors, {.k = opt.k, .iterations = 10, .seed = opt.seed});
  RowMatrixD resp = RowMatrixD::Zero(x.rows(), kk);
  for (std::size_t i = 0; i < n; ++i) resp(static_cast<Eigen::Index>(i), init.assignment[i]) = 1.0;
  detail::m_step(g, x, resp);

  const std::size_t max_iter = std::max<std::size_t>(opt.max_iterations, 1);
  for (std::size_t it = 0; it < max_iter; ++it) {
    g.prepare();
    resp = g.log_joint(x);
    const double ll = GmmModel::normalize_rows(resp).mean();
    if (!std::isfinite(ll)) throw ValidationError("fit_gmm: log-likelihood is not finite");
    g.log_likelihood.push_back(ll);
    if (it > 0) {
      const double prev = g.log_likelihood[it - 1];
      if (std::abs(ll - prev) <= opt.tolerance * std::abs(prev)) {
        g.converged = true;
        break;
      }
    }
    // The final parameters are the ones the last E-step evaluated.
    if (it + 1 < max_iter) detail::m_step(g, x, resp);
  }
  g.iterations = g.log_likelihood.size();
  g.prepare();
  return g;
}

/// Linear-interpolated q-quantile (q in [0,1]).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Default threshold: the 5th percentile of the reference set's typicality.
inline double auto_threshold(const GmmModel& g, const Matrix& reference, double q = 0.05) {
  return quantile(g.typicality(reference), q);
}

struct FilterResult {
  std::vector<Id> accepted;
  std::vector<Id> rejected;
  std::vector<double> scores;  // aligned with the input ids
};

/// Accepts candidates with S(x) >= tau.
inline FilterResult filter_batch(const GmmModel& g, std::span<const Id> ids, const Matrix& vectors, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must lie in [0, 1]");
  if (ids.size() != vectors.rows()) throw ValidationError("filter_batch: ids and vectors differ in length");
  FilterResult r;
  r.scores = g.typicality(vectors);
  for (std::size_t i = 0; i < ids.size(); ++i) (r.scores[i] >= tau ? r.accepted : r.rejected).push_back(ids[i]);
  return r;
}

inline constexpr std::array<char, 8> kGmmMagic = {'C', 'K', 'G', 'M', 'M', '\0', '\0', '\0'};
inline constexpr std::uint32_t kGmmVersion = 1;

inline void GmmModel::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.magic(kGmmMagic);
  w.scalar<std::uint32_t>(kGmmVersion);
  w.scalar<std::uint32_t>(covariance == CovarianceType::Full ? 1 : 0);
  w.scalar<std::uint64_t>(k());
  w.scalar<std::uint64_t>(dim());
  w.scalar<double>(reg_eps);
  w.scalar<double>(tau);
  w.vec(weights);
  w.vec(std::vector<double>(means.data(), means.data() + means.size()));
  if (covariance == CovarianceType::Diagonal) {
    w.vec(std::vector<double>(variances.data(), variances.data() + variances.size()));
  } else {
    for (const auto& c : covs) w.vec(std::vector<double>(c.data(), c.data() + c.size()));
  }
  w.vec(log_likelihood);
  w.finish();
}

inline GmmModel GmmModel::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kGmmMagic);
  if (const auto v = r.scalar<std::uint32_t>(); v != kGmmVersion) {
    throw ValidationError("unsupported gmm version " + std::to_string(v));
  }
  GmmModel g;
  g.covariance = r.scalar<std::uint32_t>() == 1 ? CovarianceType::Full : CovarianceType::Diagonal;
  const auto k = static_cast<Eigen::Index>(r.scalar<std::uint64_t>());
  const auto d = static_cast<Eigen::Index>(r.scalar<std::uint64_t>());
  g.reg_eps = r.scalar<double>();
  g.tau = r.scalar<double>();
  g.weights = r.vec<double>();
  auto means = r.vec<double>();
  if (static_cast<Eigen::Index>(g.weights.size()) != k || static_cast<Eigen::Index>(means.size()) != k * d) {
    throw ValidationError(path.string() + ": inconsistent gmm shapes");
  }
  g.means = Eigen::Map<RowMatrixD>(means.data(), k, d);
  if (g.covariance == CovarianceType::Diagonal) {
    auto v = r.vec<double>();
    if (static_cast<Eigen::Index>(v.size()) != k * d) throw ValidationError(path.string() + ": bad variances");
    g.variances = Eigen::Map<RowMatrixD>(v.data(), k, d);
  } else {
    for (Eigen::Index c = 0; c < k; ++c) {
      auto v = r.vec<double>();
      if (static_cast<Eigen::Index>(v.size()) != d * d) throw ValidationError(path.string() + ": bad covariance");
      g.covs.emplace_back(Eigen::Map<Eigen::MatrixXd>(v.data(), d, d));
    }
  }
  g.log_likelihood = r.vec<double>();
  r.expect_end();
  g.iterations = g.log_likelihood.size();
  g.prepare();
  return g;
}

}  // namespace curatekit
