#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "ssvgp/gp.hpp"
#include "support.hpp"

using namespace ssvgp;
using testing_support::Gen;

namespace {

KernelParams params(VectorXd theta, double tau, double noise) {
  return KernelParams{std::move(theta), tau, noise, KernelId::SquaredExponential};
}

std::vector<Eigen::Index> all_dims(Eigen::Index d) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < d; ++j) out.push_back(j);
  return out;
}

}  // namespace

TEST(Kernel, IdenticalPointsGiveTau) {
  Gen g(1);
  const VectorXd x = g.vector(4);
  EXPECT_DOUBLE_EQ(kernel_eval(x, x, params(g.vector(4), 2.0, 0.1)), 2.0);
}

TEST(Kernel, ZeroThetaGivesOne) {
  Gen g(2);
  EXPECT_DOUBLE_EQ(kernel_eval(g.vector(3), g.vector(3), params(VectorXd::Zero(3), 1.0, 0.1)), 1.0);
}

TEST(Kernel, UnitDistance) {
  const VectorXd x = VectorXd::Zero(1), x2 = VectorXd::Ones(1);
  EXPECT_NEAR(kernel_eval(x, x2, params(VectorXd::Ones(1), 1.0, 0.1)), 0.6065306597126334, 1e-15);
}

TEST(Kernel, SymmetricAndSignInvariant) {
  Gen g(3);
  for (int t = 0; t < 50; ++t) {
    const VectorXd x = g.vector(5), x2 = g.vector(5), th = g.vector(5);
    VectorXd flipped = th;
    for (Eigen::Index j = 0; j < 5; ++j)
      if (g.uniform(0, 1) < 0.5) flipped[j] = -flipped[j];
    const auto p = params(th, 1.3, 0.1);
    EXPECT_DOUBLE_EQ(kernel_eval(x, x2, p), kernel_eval(x2, x, p));
    EXPECT_DOUBLE_EQ(kernel_eval(x, x2, p), kernel_eval(x, x2, params(flipped, 1.3, 0.1)));
  }
}

TEST(Kernel, DimensionMismatchThrows) {
  EXPECT_THROW(kernel_eval(VectorXd::Zero(2), VectorXd::Zero(3), params(VectorXd::Ones(2), 1, 1)), ConfigError);
}

TEST(Gram, SinglePoint) {
  const MatrixXd X = MatrixXd::Constant(1, 2, 0.3);
  const GramFactor f = build_gram(X, params(VectorXd::Ones(2), 2.0, 0.1), 0.0);
  ASSERT_EQ(f.gram.rows(), 1);
  EXPECT_DOUBLE_EQ(f.gram(0, 0), 2.1);
  EXPECT_EQ(f.jitter, 0.0);
}

TEST(Gram, ZeroThetaIsAllOnes) {
  Gen g(4);
  const MatrixXd G = assemble_gram(g.matrix(3, 2), params(VectorXd::Zero(2), 1.0, 0.0), 0.0);
  EXPECT_TRUE(G.isApprox(MatrixXd::Ones(3, 3), 0.0));
}

TEST(Gram, SingularMatrixEscalatesJitter) {
  Gen g(5);
  const GramFactor f = build_gram(g.matrix(3, 2), params(VectorXd::Zero(2), 1.0, 0.0), 0.0);
  EXPECT_GT(f.jitter, 0.0);
}

TEST(Gram, CholeskyReconstructs) {
  Gen g(6);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd X = g.matrix(5 + t, 3);
    const GramFactor f = build_gram(X, params(g.vector(3), g.uniform(0.5, 2), g.uniform(0.01, 1)));
    const MatrixXd R = f.chol * f.chol.transpose();
    EXPECT_LT((R - f.gram).norm() / f.gram.norm(), 1e-10);
    EXPECT_TRUE(f.gram.isApprox(f.gram.transpose(), 0.0));
  }
}

TEST(Gram, SignFlipLeavesGramUnchanged) {
  Gen g(7);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd X = g.matrix(6, 4);
    const VectorXd th = g.vector(4);
    VectorXd s = th;
    for (Eigen::Index j = 0; j < 4; ++j)
      if (g.uniform(0, 1) < 0.5) s[j] = -s[j];
    const MatrixXd A = build_gram(X, params(th, 1.0, 0.1)).gram;
    const MatrixXd B = build_gram(X, params(s, 1.0, 0.1)).gram;
    EXPECT_EQ((A - B).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Gram, UnfactorableThrowsNumericError) {
  const MatrixXd K = MatrixXd::Constant(2, 2, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(detail::factorize(K, 0.0, 1e-3), NumericError);
}

TEST(LogMarginal, ScalarCases) {
  GramFactor f;
  f.gram = MatrixXd::Ones(1, 1);
  f.chol = MatrixXd::Ones(1, 1);
  EXPECT_NEAR(log_marginal(VectorXd::Zero(1), f), -0.918938533204673, 1e-12);
  EXPECT_NEAR(log_marginal(VectorXd::Ones(1), f), -1.418938533204673, 1e-12);
}

TEST(LogMarginal, MatchesDenseFormula) {
  Gen g(8);
  for (int t = 0; t < 30; ++t) {
    const MatrixXd X = g.matrix(3, 2);
    const VectorXd y = g.vector(3), th = g.vector(2);
    const double tau = g.uniform(0.5, 2), noise = g.uniform(0.05, 1);
    const double got = log_marginal(y, build_gram(X, params(th, tau, noise), 1e-3));
    EXPECT_NEAR(got, testing_support::dense_log_marginal(y, X, th, tau, noise, 1e-3), 1e-9);
  }
}

// Central finite differences of the dense oracle in (theta, log tau, log noise).
TEST(Gradients, MatchFiniteDifferences) {
  Gen g(9);
  const double h = 1e-5;
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index n = g.integer(2, 8), d = g.integer(1, 4);
    const MatrixXd X = g.matrix(n, d);
    const VectorXd y = g.vector(n);
    const VectorXd th = g.uniform_vector(d, -1.5, 1.5);
    const double tau = g.uniform(0.5, 2), noise = g.uniform(0.05, 0.5);
    const auto grads = log_marginal_gradients(y, X, params(th, tau, noise), all_dims(d), 1e-3);
    auto lm = [&](const VectorXd &th2, double lt, double ln) {
      return testing_support::dense_log_marginal(y, X, th2, std::exp(lt), std::exp(ln), 1e-3);
    };
    auto close = [&](double analytic, double fd) {
      EXPECT_LE(std::abs(analytic - fd), 1e-4 * std::max(1.0, std::abs(fd))) << "analytic " << analytic << " fd " << fd;
      ++checked;
    };
    for (Eigen::Index j = 0; j < d; ++j) {
      VectorXd p = th, m = th;
      p[j] += h;
      m[j] -= h;
      close(grads.d_theta[j], (lm(p, std::log(tau), std::log(noise)) - lm(m, std::log(tau), std::log(noise))) / (2 * h));
    }
    close(grads.d_log_tau,
          (lm(th, std::log(tau) + h, std::log(noise)) - lm(th, std::log(tau) - h, std::log(noise))) / (2 * h));
    close(grads.d_log_noise,
          (lm(th, std::log(tau), std::log(noise) + h) - lm(th, std::log(tau), std::log(noise) - h)) / (2 * h));
  }
  EXPECT_GT(checked, 300);
}

TEST(Gradients, ZeroThetaHasZeroGradient) {
  Gen g(10);
  VectorXd th = g.vector(3);
  th[1] = 0.0;
  const auto grads = log_marginal_gradients(g.vector(6), g.matrix(6, 3), params(th, 1.0, 0.2), all_dims(3));
  EXPECT_EQ(grads.d_theta[1], 0.0);
}

TEST(Gradients, InactiveDimensionReportsZero) {
  Gen g(11);
  const auto grads = log_marginal_gradients(g.vector(6), g.matrix(6, 3), params(g.vector(3), 1.0, 0.2), {0, 2});
  EXPECT_EQ(grads.d_theta[1], 0.0);
  EXPECT_NE(grads.d_theta[0], 0.0);
}

TEST(Predict, InterpolatesWithoutNoise) {
  Gen g(12);
  const MatrixXd X = g.matrix(5, 2);
  const VectorXd y = g.vector(5);
  const Prediction p = gp_predict(X, y, X, params(VectorXd::Constant(2, 0.8), 1.0, 0.0), 0.0);
  EXPECT_LT((p.mean - y).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(p.var.maxCoeff(), 1e-6);
}

TEST(Predict, RevertsToPriorFarAway) {
  Gen g(13);
  const MatrixXd X = g.matrix(4, 2);
  const MatrixXd far = MatrixXd::Constant(1, 2, 1e4);
  const Prediction p = gp_predict(X, g.vector(4), far, params(VectorXd::Ones(2), 1.7, 0.3), 0.0);
  EXPECT_NEAR(p.mean[0], 0.0, 1e-12);
  EXPECT_NEAR(p.var[0], 1.7 + 0.3, 1e-12);
}

TEST(Predict, MatchesDenseFormula) {
  Gen g(14);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd X = g.matrix(4, 3), Xs = g.matrix(3, 3);
    const VectorXd y = g.vector(4), th = g.vector(3);
    const Prediction p = gp_predict(X, y, Xs, params(th, 1.2, 0.4), 1e-3);
    for (Eigen::Index i = 0; i < 3; ++i) {
      const auto ref = testing_support::dense_predict(X, y, Xs.row(i).transpose(), th, 1.2, 0.4, 1e-3);
      EXPECT_NEAR(p.mean[i], ref.mean, 1e-9);
      EXPECT_NEAR(p.var[i], ref.var, 1e-9);
    }
  }
}

// Deleting each point and refitting by dense algebra.
TEST(Loopd, MatchesBruteForceRefits) {
  Gen g(15);
  for (Eigen::Index n = 2; n <= 12; ++n) {
    for (int rep = 0; rep < 3; ++rep) {
      const Eigen::Index d = g.integer(1, 4);
      const MatrixXd X = g.matrix(n, d);
      const VectorXd y = g.vector(n), th = g.uniform_vector(d, -1, 1);
      const double tau = g.uniform(0.5, 2), noise = g.uniform(0.05, 0.5), kappa = rep == 2 ? 0.1 : 0.0;
      const VectorXd got = loopd_exact(y, X, params(th, tau, noise), kappa, 1e-3);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto m = testing_support::dense_predict(testing_support::drop_row(X, i), testing_support::drop_entry(y, i),
                                                      X.row(i).transpose(), th, tau, noise, 1e-3);
        EXPECT_NEAR(got[i], testing_support::log_normal(y[i], m.mean, m.var + kappa), 1e-8) << "n=" << n;
      }
    }
  }
}

TEST(Loopd, KappaShiftsEveryVarianceByKappa) {
  Gen g(16);
  const MatrixXd X = g.matrix(7, 2);
  const VectorXd y = g.vector(7);
  const auto p = params(g.vector(2), 1.0, 0.2);
  const LooMoments m = loo_moments(y, X, p);
  const VectorXd a = loopd_exact(y, X, p, 0.0), b = loopd_exact(y, X, p, 0.1);
  for (Eigen::Index i = 0; i < 7; ++i) {
    // Recover each variance from its density and the known mean.
    EXPECT_NEAR(b[i], log_normal_pdf(y[i], m.mean[i], m.var[i] + 0.1), 1e-12);
    EXPECT_NEAR(a[i], log_normal_pdf(y[i], m.mean[i], m.var[i]), 1e-12);
  }
}

TEST(Loopd, IidLimitApproachesPriorMoments) {
  // With theta = 0 every pair has covariance tau; in the large-noise limit
  // each left-out point is predicted by mean 0, variance tau + noise.
  const MatrixXd X = (MatrixXd(2, 1) << 0.0, 1.0).finished();
  const VectorXd y = (VectorXd(2) << 0.4, -0.3).finished();
  const double noise = 1e6;
  const LooMoments m = loo_moments(y, X, params(VectorXd::Zero(1), 1.0, noise), 0.0);
  for (Eigen::Index i = 0; i < 2; ++i) {
    // Closed form for two points: mean = tau y_j / (tau + s), var = tau + s - tau^2 / (tau + s).
    const double s = noise, yj = y[1 - i];
    EXPECT_NEAR(m.mean[i], yj / (1.0 + s), 1e-12);
    EXPECT_NEAR(m.var[i], 1.0 + s - 1.0 / (1.0 + s), 1e-9 * s);
    EXPECT_NEAR(m.mean[i], 0.0, 1e-6);
  }
}

TEST(Loopd, RejectsTinyDatasets) {
  EXPECT_THROW(loopd_exact(VectorXd::Zero(1), MatrixXd::Zero(1, 1), params(VectorXd::Ones(1), 1, 1)), DataError);
}

TEST(Mlii, ZeroItersReturnsInit) {
  Gen g(17);
  const auto init = params(g.vector(3), 1.3, 0.7);
  const KernelParams out = train_mlii(g.vector(5), g.matrix(5, 3), init, 0, 0.1);
  EXPECT_EQ(out.theta, init.theta);
  EXPECT_EQ(out.tau, init.tau);
  EXPECT_EQ(out.noise_var, init.noise_var);
}

TEST(Mlii, NoiseShrinksOnZeroResponse) {
  Gen g(18);
  MliiTrace trace;
  train_mlii(VectorXd::Zero(20), g.matrix(20, 3), params(VectorXd::Constant(3, 0.5), 1.0, 1.0), 10, 0.1, 1e-3, &trace);
  ASSERT_EQ(trace.noise_var.size(), 10u);
  for (std::size_t i = 1; i < trace.noise_var.size(); ++i) EXPECT_LT(trace.noise_var[i], trace.noise_var[i - 1]);
}

TEST(Mlii, RelevantLengthscalesDominateOnToyLikeData) {
  Gen g(19);
  const Eigen::Index n = 200, d = 20;
  const MatrixXd X = g.matrix(n, d);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = 0.0;
    for (int j = 0; j < 5; ++j) y[i] += std::sin((0.5 + 0.125 * j) * X(i, j));
    y[i] += 0.1 * g.normal();
  }
  y = (y.array() - y.mean()) / std::sqrt((y.array() - y.mean()).square().mean());
  const auto out = train_mlii(y, X, params(VectorXd::Constant(d, 1 / std::sqrt(double(d))), 1, 1), 300, 0.1);
  std::vector<double> irrelevant;
  for (Eigen::Index j = 5; j < d; ++j) irrelevant.push_back(std::abs(out.theta[j]));
  std::nth_element(irrelevant.begin(), irrelevant.begin() + irrelevant.size() / 2, irrelevant.end());
  const double med = irrelevant[irrelevant.size() / 2];
  for (int j = 0; j < 5; ++j) EXPECT_GT(std::abs(out.theta[j]), med) << "dimension " << j;
}
