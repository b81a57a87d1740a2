#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <vector>

#include "kinverify/datakit.hpp"
#include "kinverify/optim.hpp"

using kinverify::datakit::Rng;
namespace optim = kinverify::optim;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      m(i, j) = rng.normal();
    }
  }
  return m;
}

Eigen::VectorXd random_vector(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    v(i) = rng.normal();
  }
  return v;
}

// Independent prox oracle: singular values and right vectors from the
// symmetric eigendecomposition of M^T M, left vectors from M V / sigma,
// then an explicit threshold-and-reconstruct. Deliberately a different
// algorithm from the implementation path.
Eigen::MatrixXd prox_oracle(const Eigen::MatrixXd& m, double tau) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.transpose() * m);
  const Eigen::MatrixXd v = eig.eigenvectors();
  const Eigen::VectorXd sigma = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  const double cutoff = 1e-12 * sigma.maxCoeff();
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) <= cutoff) {
      continue;  // thresholded away; tau in these tests is >> cutoff
    }
    const double shrunk = std::max(sigma(i) - tau, 0.0);
    if (shrunk == 0.0) {
      continue;
    }
    const Eigen::VectorXd u = m * v.col(i) / sigma(i);
    out += shrunk * u * v.col(i).transpose();
  }
  return out;
}

double pair_count_auc(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != -1) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("sigmoid basics") {
  CHECK(optim::sigmoid(0.0) == 0.5);
  for (double x : {-5.0, 1.0, 30.0}) {
    CHECK(optim::sigmoid(x) + optim::sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const double top = optim::sigmoid(100.0);
  CHECK(top > 1.0 - 1e-16);
  CHECK(top <= 1.0);
  CHECK(std::isfinite(optim::sigmoid(700.0)));
  CHECK(std::isfinite(optim::sigmoid(-700.0)));
  CHECK(optim::sigmoid(-700.0) >= 0.0);
}

TEST_CASE("soft threshold definition") {
  Eigen::VectorXd v(3);
  v << 3.0, -0.5, 0.0;
  const Eigen::VectorXd out = optim::soft_threshold(v, 1.0);
  CHECK(out(0) == 2.0);
  CHECK(out(1) == 0.0);
  CHECK(out(2) == 0.0);

  Rng rng(7);
  const Eigen::VectorXd any = random_vector(rng, 20);
  CHECK(optim::soft_threshold(any, 0.0) == any);  // bitwise identity
  const double big = any.cwiseAbs().maxCoeff();
  CHECK(optim::soft_threshold(any, big).isZero(0.0));

  CHECK_THROWS_AS(optim::soft_threshold(any, -0.1), std::invalid_argument);
}

TEST_CASE("prox of the trace norm on a diagonal matrix") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = 3.0;
  m(1, 1) = 1.0;
  const Eigen::MatrixXd out = optim::prox_trace_norm(m, 1.0);
  CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(out(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(out(0, 1)) < 1e-12);

  CHECK(optim::prox_trace_norm(Eigen::MatrixXd::Zero(3, 4), 0.5).isZero(0.0));

  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(optim::prox_trace_norm(bad, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(optim::prox_trace_norm(m, -1.0), std::invalid_argument);
}

TEST_CASE("prox matches the eigendecomposition oracle") {
  Rng rng(42);
  // the spec's 5x3 case plus random shapes up to 8x8
  {
    const Eigen::MatrixXd m = random_matrix(rng, 5, 3);
    const Eigen::MatrixXd diff = optim::prox_trace_norm(m, 0.7) - prox_oracle(m, 0.7);
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-10);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = 1 + static_cast<int>(rng.below(8));
    const int cols = 1 + static_cast<int>(rng.below(8));
    const Eigen::MatrixXd m = random_matrix(rng, rows, cols);
    const double tau = 0.2 + rng.uniform();
    const Eigen::MatrixXd diff =
        optim::prox_trace_norm(m, tau) - prox_oracle(m, tau);
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gradient check against central differences") {
  Rng rng(11);
  const int n = 20, d = 5;
  const Eigen::MatrixXd left = random_matrix(rng, n, d);
  const Eigen::MatrixXd right = random_matrix(rng, n, d);
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n; ++i) {
    labels(i) = i % 2 == 0 ? 1 : -1;
  }
  const Eigen::MatrixXd w = 0.3 * random_matrix(rng, d, d);
  const double err =
      optim::bilinear_gradient_check(left, right, labels, w, 0.2);
  CHECK(err <= 1e-5);

  const Eigen::VectorXd u = 0.3 * random_vector(rng, d);
  CHECK(optim::linear_gradient_check(left, labels, u) <= 1e-5);

  // repeated call, same inputs: identical bits
  const double again =
      optim::bilinear_gradient_check(left, right, labels, w, 0.2);
  CHECK(std::memcmp(&err, &again, sizeof(double)) == 0);
}

TEST_CASE("bias gradient vanishes at zero parameters with balanced labels") {
  Rng rng(12);
  const int n = 30, d = 4;
  const Eigen::MatrixXd left = random_matrix(rng, n, d);
  const Eigen::MatrixXd right = random_matrix(rng, n, d);
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n; ++i) {
    labels(i) = i < n / 2 ? 1 : -1;
  }
  Eigen::MatrixXd grad_w;
  double grad_b = 1.0;
  optim::bilinear_logistic_loss(left, right, labels, Eigen::MatrixXd::Zero(d, d),
                                0.0, &grad_w, &grad_b);
  CHECK(std::abs(grad_b) <= 1e-10);
}

TEST_CASE("dominating trace-norm penalty zeroes W and leaves the base-rate bias") {
  Rng rng(3);
  const int n = 100, d = 4;
  const Eigen::MatrixXd left = random_matrix(rng, n, d);
  const Eigen::MatrixXd right = random_matrix(rng, n, d);
  Eigen::VectorXi labels(n);
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    labels(i) = i % 5 != 0 ? 1 : -1;  // 80/20 split
    pos += labels(i) == 1;
  }
  optim::SolverConfig cfg;
  cfg.max_iterations = 3000;
  cfg.tolerance = 1e-14;
  const optim::TraceNormFit fit =
      optim::fit_trace_norm_bilinear(left, right, labels, 1e6, cfg);
  CHECK(fit.w.cwiseAbs().maxCoeff() <= 1e-6);
  const double base_rate_logit =
      std::log(static_cast<double>(pos) / static_cast<double>(n - pos));
  CHECK(fit.bias == doctest::Approx(base_rate_logit).epsilon(1e-6));
}

TEST_CASE("objective trace is non-increasing and the fit is deterministic") {
  Rng rng(5);
  const int n = 80, d = 6;
  const Eigen::MatrixXd left = random_matrix(rng, n, d);
  const Eigen::MatrixXd right = random_matrix(rng, n, d);
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n; ++i) {
    labels(i) = rng.below(2) == 0 ? 1 : -1;
  }
  if (labels.maxCoeff() == labels.minCoeff()) {
    labels(0) = -labels(1);
  }
  optim::SolverConfig cfg;
  cfg.max_iterations = 200;
  cfg.tolerance = 1e-10;
  const optim::TraceNormFit fit =
      optim::fit_trace_norm_bilinear(left, right, labels, 0.5, cfg);
  for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
    CHECK(fit.objective_trace[i] <=
          fit.objective_trace[i - 1] +
              1e-9 * std::max(1.0, std::abs(fit.objective_trace[i - 1])));
  }
  const optim::TraceNormFit again =
      optim::fit_trace_norm_bilinear(left, right, labels, 0.5, cfg);
  REQUIRE(again.w.size() == fit.w.size());
  CHECK(std::memcmp(again.w.data(), fit.w.data(),
                    sizeof(double) * fit.w.size()) == 0);
  CHECK(std::memcmp(&again.bias, &fit.bias, sizeof(double)) == 0);

  // L1 path too
  Eigen::MatrixXd samples(n, 2 * d);
  samples << left, right;
  const optim::L1Fit l1 = optim::fit_l1_logistic(samples, labels, 0.3, cfg);
  for (std::size_t i = 1; i < l1.objective_trace.size(); ++i) {
    CHECK(l1.objective_trace[i] <=
          l1.objective_trace[i - 1] +
              1e-9 * std::max(1.0, std::abs(l1.objective_trace[i - 1])));
  }
}

TEST_CASE("solution satisfies the composite KKT conditions") {
  Rng rng(9);
  const int n = 60, d = 6;
  const Eigen::MatrixXd left = random_matrix(rng, n, d);
  const Eigen::MatrixXd right = random_matrix(rng, n, d);
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n; ++i) {
    labels(i) = i % 2 == 0 ? 1 : -1;
  }
  const double lambda = 1.0;
  optim::SolverConfig cfg;
  cfg.max_iterations = 8000;
  cfg.tolerance = 1e-15;
  const optim::TraceNormFit fit =
      optim::fit_trace_norm_bilinear(left, right, labels, lambda, cfg);

  Eigen::MatrixXd grad_w;
  double grad_b = 0.0;
  optim::bilinear_logistic_loss(left, right, labels, fit.w, fit.bias, &grad_w,
                                &grad_b);
  // unit-step gradient mapping residual, zero at an exact optimum
  const Eigen::MatrixXd residual =
      fit.w - optim::prox_trace_norm(fit.w - grad_w, lambda);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
  CHECK(svd.singularValues()(0) <= 1e-4);
  CHECK(std::abs(grad_b) <= 1e-4);

  // every singular value of W is either (numerically) zero or active
  const Eigen::JacobiSVD<Eigen::MatrixXd> wsvd(fit.w);
  int active = 0, zero = 0;
  for (Eigen::Index i = 0; i < wsvd.singularValues().size(); ++i) {
    if (wsvd.singularValues()(i) <= 1e-8) {
      ++zero;
    } else {
      ++active;
    }
  }
  CHECK(active + zero == d);
  CHECK(zero > 0);  // the penalty actually reduced the rank here
}

TEST_CASE("planted low-rank bilinear model is recovered") {
  Rng rng(2024);
  const int d = 12, n_train = 1500, n_test = 500;
  Eigen::MatrixXd w_true = random_matrix(rng, d, 2) * random_matrix(rng, 2, d);
  w_true /= w_true.norm();
  const double margin = 0.3;

  const auto draw = [&](int count, Eigen::MatrixXd& l, Eigen::MatrixXd& r,
                        Eigen::VectorXi& y) {
    l.resize(count, d);
    r.resize(count, d);
    y.resize(count);
    int have = 0;
    while (have < count) {
      const Eigen::VectorXd a = random_vector(rng, d);
      const Eigen::VectorXd b = random_vector(rng, d);
      const double s = a.dot(w_true * b);
      if (std::abs(s) < margin) {
        continue;
      }
      l.row(have) = a;
      r.row(have) = b;
      y(have) = s > 0 ? 1 : -1;
      ++have;
    }
  };
  Eigen::MatrixXd l_train, r_train, l_test, r_test;
  Eigen::VectorXi y_train, y_test;
  draw(n_train, l_train, r_train, y_train);
  draw(n_test, l_test, r_test, y_test);

  optim::SolverConfig cfg;
  cfg.max_iterations = 400;
  cfg.tolerance = 1e-9;
  const optim::TraceNormFit fit =
      optim::fit_trace_norm_bilinear(l_train, r_train, y_train, 0.1, cfg);

  std::vector<double> scores(n_test);
  std::vector<int> labels(n_test);
  for (int i = 0; i < n_test; ++i) {
    scores[i] = l_test.row(i).dot(fit.w * r_test.row(i).transpose()) + fit.bias;
    labels[i] = y_test(i);
  }
  CHECK(pair_count_auc(scores, labels) >= 0.95);
}

TEST_CASE("dominating L1 penalty zeroes u") {
  Rng rng(6);
  const Eigen::MatrixXd samples = random_matrix(rng, 40, 10);
  Eigen::VectorXi labels(40);
  for (int i = 0; i < 40; ++i) {
    labels(i) = i % 2 == 0 ? 1 : -1;
  }
  const optim::L1Fit fit = optim::fit_l1_logistic(samples, labels, 1e6);
  CHECK(fit.u.isZero(0.0));
}

TEST_CASE("planted sparse support is recovered by the L1 fit") {
  Rng rng(77);
  const int d = 200, n = 1000, support = 10;
  Eigen::VectorXd u_true = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < support; ++j) {
    u_true(j) = rng.below(2) == 0 ? 1.0 : -1.0;
  }
  Eigen::MatrixXd samples(n, d);
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = random_vector(rng, d);
    samples.row(i) = x;
    labels(i) = u_true.dot(x) > 0 ? 1 : -1;
  }
  optim::SolverConfig cfg;
  cfg.max_iterations = 400;
  cfg.tolerance = 1e-9;
  const optim::L1Fit fit = optim::fit_l1_logistic(samples, labels, 2.0, cfg);
  int recovered = 0;
  for (int j = 0; j < support; ++j) {
    if (std::abs(fit.u(j)) > 1e-6) {
      ++recovered;
    }
  }
  CHECK(recovered >= 8);
}

TEST_CASE("solver input validation") {
  Eigen::MatrixXd l = Eigen::MatrixXd::Random(4, 3);
  Eigen::MatrixXd r = Eigen::MatrixXd::Random(4, 3);
  Eigen::VectorXi y(4);
  y << 1, -1, 1, -1;

  CHECK_THROWS_AS(optim::fit_trace_norm_bilinear(l, r, y, 0.0),
                  std::invalid_argument);
  Eigen::VectorXi ones = Eigen::VectorXi::Constant(4, 1);
  CHECK_THROWS_AS(optim::fit_trace_norm_bilinear(l, r, ones, 0.5),
                  std::invalid_argument);
  Eigen::VectorXi bad(4);
  bad << 1, -1, 2, 1;
  CHECK_THROWS_AS(optim::fit_trace_norm_bilinear(l, r, bad, 0.5),
                  std::invalid_argument);
  Eigen::MatrixXd shorter = Eigen::MatrixXd::Random(3, 3);
  CHECK_THROWS_AS(optim::fit_trace_norm_bilinear(l, shorter, y, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(optim::fit_l1_logistic(l, y, -1.0), std::invalid_argument);
}
