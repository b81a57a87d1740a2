// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace kinverify::optim {

/// Knobs shared by every solver in this module. Fits are deterministic
/// functions of (data, config); the seed is reserved for randomized
/// initialization variants and does not affect the default solvers.
struct SolverConfig {
  int max_iterations = 500;
  double step_size_init = 1.0;
  double tolerance = 1e-7;  // relative composite-objective change
  std::uint64_t seed = 0;
};

/// Result of the trace-norm regularized bilinear logistic fit.
struct TraceNormFit {
  Eigen::MatrixXd w;
  double bias = 0.0;
  std::vector<double> objective_trace;  // composite objective per iteration
};

/// Result of the L1 regularized logistic fit.
struct L1Fit {
  Eigen::VectorXd u;
  std::vector<double> objective_trace;
};

/// Result of the (smooth) L2 regularized logistic fit.
struct LinearFit {
  Eigen::VectorXd w;
  double bias = 0.0;
  std::vector<double> objective_trace;
};

/// Logistic sigmoid 1/(1+e^-x), saturating without overflow for any finite x.
double sigmoid(double x);

/// log(1 + e^z) computed without overflow.
double log1p_exp(double z);

/// Elementwise sign(v_j) * max(|v_j| - tau, 0). Rejects tau < 0.
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double tau);

/// Singular value shrinkage: U diag(max(sigma_i - tau, 0)) V^T.
/// Rejects non-finite input or tau < 0.
Eigen::MatrixXd prox_trace_norm(const Eigen::MatrixXd& m, double tau);

/// Sum of singular values.
double trace_norm(const Eigen::MatrixXd& m);

/// Minimizes sum_i log(1 + exp(-y_i (l_i^T W r_i + b))) + lambda ||W||_*
/// over W and the unpenalized bias b, by accelerated proximal gradient
/// with backtracking line search and monotone restart. Rows of `left`
/// and `right` are the paired input vectors.
TraceNormFit fit_trace_norm_bilinear(const Eigen::MatrixXd& left,
                                     const Eigen::MatrixXd& right,
                                     const Eigen::VectorXi& labels,
                                     double lambda,
                                     const SolverConfig& cfg = {});

/// Minimizes sum_i log(1 + exp(-y_i u.a_i)) + gamma ||u||_1 by proximal
/// gradient with soft thresholding. Rows of `samples` are the a_i.
L1Fit fit_l1_logistic(const Eigen::MatrixXd& samples,
                      const Eigen::VectorXi& labels,
                      double gamma,
                      const SolverConfig& cfg = {});

/// Minimizes sum_i log(1 + exp(-y_i (w.x_i + b))) + l2/2 ||w||^2 with an
/// unpenalized bias. Smooth, so this is plain accelerated gradient.
LinearFit fit_l2_logistic(const Eigen::MatrixXd& samples,
                          const Eigen::VectorXi& labels,
                          double l2,
                          const SolverConfig& cfg = {});

/// Max relative error between the analytic gradient of the smooth logistic
/// part of the bilinear objective and central finite differences (step h),
/// taken over all entries of W and the bias.
double bilinear_gradient_check(const Eigen::MatrixXd& left,
                               const Eigen::MatrixXd& right,
                               const Eigen::VectorXi& labels,
                               const Eigen::MatrixXd& w,
                               double bias,
                               double h = 1e-5);

/// Same check for the linear logistic smooth part at point u.
double linear_gradient_check(const Eigen::MatrixXd& samples,
                             const Eigen::VectorXi& labels,
                             const Eigen::VectorXd& u,
                             double h = 1e-5);

/// Smooth logistic loss and gradient of the bilinear model, exposed for
/// gradient checks and KKT residual tests.
double bilinear_logistic_loss(const Eigen::MatrixXd& left,
                              const Eigen::MatrixXd& right,
                              const Eigen::VectorXi& labels,
                              const Eigen::MatrixXd& w,
                              double bias,
                              Eigen::MatrixXd* grad_w = nullptr,
                              double* grad_bias = nullptr);

/// Smooth logistic loss and gradient of the linear model.
double linear_logistic_loss(const Eigen::MatrixXd& samples,
                            const Eigen::VectorXi& labels,
                            const Eigen::VectorXd& u,
                            Eigen::VectorXd* grad = nullptr);

}  // namespace kinverify::optim
