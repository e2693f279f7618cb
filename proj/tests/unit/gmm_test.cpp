#include <gtest/gtest.h>

#include <algorithm>
#include <array>

#include "curatekit/ood/gmm.hpp"
#include "test_util.hpp"

using namespace curatekit;

namespace {

// Samples from known components; returns the matrix and fills `truth`.
Matrix mixture(std::size_t per, std::size_t d, const std::vector<std::vector<double>>& means, double sigma,
               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Matrix m(per * means.size(), d);
  for (std::size_t c = 0; c < means.size(); ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t j = 0; j < d; ++j) m(c * per + i, j) = static_cast<float>(means[c][j] + g(rng));
    }
  }
  return m;
}

GmmModel two_component(double w0, double mu0, double mu1, double var) {
  GmmModel g;
  g.weights = {w0, 1.0 - w0};
  g.means = RowMatrixD(2, 1);
  g.means << mu0, mu1;
  g.variances = RowMatrixD::Constant(2, 1, var);
  g.prepare();
  return g;
}

double normal_pdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace

TEST(Gmm, SingleComponentIsClosedForm) {
  const auto x = testutil::gaussian_matrix(500, 4, 1, 2.0);
  for (auto cov : {CovarianceType::Diagonal, CovarianceType::Full}) {
    const auto g = fit_gmm(x, {.k = 1, .covariance = cov});
    const RowMatrixD xd = as_eigen(x).cast<double>();
    const Eigen::RowVectorXd mean = xd.colwise().mean();
    const RowMatrixD c = xd.rowwise() - mean;
    const Eigen::MatrixXd s = c.transpose() * c / 500.0;
    EXPECT_NEAR(g.weights[0], 1.0, 1e-12);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(g.means(0, j), mean[j], 1e-10);
    if (cov == CovarianceType::Diagonal) {
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(g.variances(0, j), s(j, j), 1e-9);
    } else {
      EXPECT_LT((g.covs[0] - s).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Gmm, DegenerateCoordinateFlooredAtEps) {
  auto x = testutil::gaussian_matrix(50, 3, 2);
  for (std::size_t i = 0; i < x.rows(); ++i) x(i, 1) = 7.0f;
  const auto g = fit_gmm(x, {.k = 1, .reg_eps = 1e-6});
  EXPECT_DOUBLE_EQ(g.variances(0, 1), 1e-6);
  const auto f = fit_gmm(x, {.k = 1, .covariance = CovarianceType::Full, .reg_eps = 1e-6});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.covs[0]);
  EXPECT_GE(es.eigenvalues().minCoeff(), 1e-6 * (1 - 1e-9));
}

TEST(Gmm, RecoversSeparatedMeans) {
  const double sigma = 1.0;
  const std::vector<std::vector<double>> truth{{0, 0, 0}, {10, 0, 0}, {0, 10, 0}};
  const auto x = mixture(2000, 3, truth, sigma, 3);
  const auto g = fit_gmm(x, {.k = 3, .seed = 5});
  std::array<int, 3> perm{0, 1, 2};
  double best = INFINITY;
  do {
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
      for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(g.means(perm[c], j) - truth[c][j]));
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_LT(best, 0.1 * sigma);
}

TEST(Gmm, LogLikelihoodNeverDecreases) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = testutil::gaussian_matrix(200 + 10 * seed, 2 + seed % 5, seed);
    const auto cov = seed % 2 ? CovarianceType::Full : CovarianceType::Diagonal;
    const auto g = fit_gmm(x, {.k = 1 + seed % 6, .covariance = cov, .seed = seed});
    for (std::size_t i = 1; i < g.log_likelihood.size(); ++i) {
      EXPECT_GE(g.log_likelihood[i], g.log_likelihood[i - 1] - 1e-9) << "seed " << seed << " it " << i;
    }
    EXPECT_LE(g.iterations, 200u);
  }
}

TEST(Gmm, DeterministicUnderSeed) {
  const auto x = testutil::gaussian_matrix(300, 5, 4);
  const auto a = fit_gmm(x, {.k = 4, .seed = 8});
  const auto b = fit_gmm(x, {.k = 4, .seed = 8});
  EXPECT_EQ(a.means, b.means);
  EXPECT_EQ(a.log_likelihood, b.log_likelihood);
}

TEST(Gmm, Errors) {
  EXPECT_THROW(fit_gmm(testutil::gaussian_matrix(3, 2, 1), {.k = 4}), ValidationError);
  EXPECT_THROW(fit_gmm(testutil::gaussian_matrix(3, 2, 1), {.k = 0}), ValidationError);
  auto bad = testutil::gaussian_matrix(10, 2, 1);
  bad(3, 1) = NAN;
  EXPECT_THROW(fit_gmm(bad, {.k = 1}), ValidationError);
}

TEST(Responsibilities, SingleComponentIsOne) {
  const auto g = fit_gmm(testutil::gaussian_matrix(100, 3, 5), {.k = 1});
  const auto probe = testutil::gaussian_matrix(20, 3, 6, 50.0);
  const auto r = g.responsibilities(probe);
  for (Eigen::Index i = 0; i < r.rows(); ++i) EXPECT_DOUBLE_EQ(r(i, 0), 1.0);
  for (double s : g.typicality(probe)) EXPECT_DOUBLE_EQ(s, 1.0);
}

TEST(Responsibilities, SymmetricPointIsEven) {
  const auto g = two_component(0.5, -3.0, 3.0, 1.0);
  const std::vector<float> x{0.0f};
  const auto r = g.responsibilities(std::span<const float>(x));
  EXPECT_DOUBLE_EQ(r[0], 0.5);
  EXPECT_DOUBLE_EQ(r[1], 0.5);
}

TEST(Responsibilities, MatchesDirectDensity) {
  const auto g = two_component(0.3, 0.0, 20.0, 1.0);
  for (float xv : {0.0f, 5.0f, 10.0f, 12.5f}) {
    const std::vector<float> x{xv};
    const double a = 0.3 * normal_pdf(xv, 0.0, 1.0), b = 0.7 * normal_pdf(xv, 20.0, 1.0);
    const auto r = g.responsibilities(std::span<const float>(x));
    EXPECT_NEAR(r[0], a / (a + b), 1e-12);
  }
  const std::vector<float> at{0.0f};
  EXPECT_GT(g.responsibilities(std::span<const float>(at))[0], 0.999);
}

TEST(Responsibilities, LogSpaceSurvivesUnderflow) {
  const auto g = two_component(0.5, 0.0, 1.0, 1.0);
  const std::vector<float> far{1e6f};
  const auto r = g.responsibilities(std::span<const float>(far));
  EXPECT_NEAR(r[0] + r[1], 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(r[1], 1.0);
}

TEST(Typicality, IsMaxResponsibility) {
  const auto g = two_component(0.7, 0.0, 0.0, 1.0);
  const std::vector<float> x{0.3f};
  EXPECT_NEAR(g.typicality(std::span<const float>(x)), 0.7, 1e-12);
}

TEST(Typicality, AtLeastOneOverK) {
  const auto x = testutil::gaussian_matrix(400, 4, 7);
  const auto g = fit_gmm(x, {.k = 5});
  const auto r = g.responsibilities(testutil::gaussian_matrix(1000, 4, 8, 3.0));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    EXPECT_NEAR(r.row(i).sum(), 1.0, 1e-9);
    EXPECT_GE(r.row(i).maxCoeff(), 1.0 / 5.0);
  }
}

TEST(FilterBatch, ThresholdsAndPartition) {
  const auto x = testutil::gaussian_matrix(300, 3, 9);
  const auto g = fit_gmm(x, {.k = 3});
  const auto cand = testutil::gaussian_matrix(100, 3, 10, 2.0);
  std::vector<Id> ids(100);
  std::iota(ids.begin(), ids.end(), 500);
  EXPECT_EQ(filter_batch(g, ids, cand, 0.0).accepted.size(), 100u);
  const auto r = filter_batch(g, ids, cand, 0.8);
  EXPECT_EQ(r.accepted.size() + r.rejected.size(), 100u);
  std::vector<Id> all = r.accepted;
  all.insert(all.end(), r.rejected.begin(), r.rejected.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, ids);
  for (std::size_t i = 0; i < 100; ++i) {
    const bool acc = std::find(r.accepted.begin(), r.accepted.end(), ids[i]) != r.accepted.end();
    EXPECT_EQ(acc, r.scores[i] >= 0.8);
  }
  const auto one = fit_gmm(x, {.k = 1});
  EXPECT_EQ(filter_batch(one, ids, cand, 1.0).accepted.size(), 100u);
  EXPECT_THROW(filter_batch(g, ids, cand, 1.0 + 1e-9), ValidationError);
}

TEST(FilterBatch, AutoThresholdIsFifthPercentile) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.05), 0.5);
  const auto x = testutil::gaussian_matrix(400, 3, 11);
  const auto g = fit_gmm(x, {.k = 4});
  const double tau = auto_threshold(g, x);
  const auto s = g.typicality(x);
  const auto below = std::count_if(s.begin(), s.end(), [&](double v) { return v < tau; });
  EXPECT_NEAR(static_cast<double>(below) / 400.0, 0.05, 0.01);
}

TEST(Gmm, SaveLoadRoundTrip) {
  const auto dir = testutil::temp_dir("gmm");
  const auto x = testutil::gaussian_matrix(300, 4, 12);
  for (auto cov : {CovarianceType::Diagonal, CovarianceType::Full}) {
    auto g = fit_gmm(x, {.k = 3, .covariance = cov});
    g.tau = 0.42;
    g.save(dir / "g.bin");
    const auto back = GmmModel::load(dir / "g.bin");
    EXPECT_EQ(back.weights, g.weights);
    EXPECT_EQ(back.means, g.means);
    EXPECT_EQ(back.tau, 0.42);
    EXPECT_EQ(back.typicality(x), g.typicality(x));
  }
}
