// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#include "kinverify/optim.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace kinverify::optim {

namespace {

constexpr double kMinStep = 1e-18;

void check_labels(const Eigen::VectorXi& labels) {
  bool has_pos = false;
  bool has_neg = false;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1) {
      has_pos = true;
    } else if (labels(i) == -1) {
      has_neg = true;
    } else {
      throw std::invalid_argument("labels must be +1 or -1");
    }
  }
  if (!has_pos || !has_neg) {
    throw std::invalid_argument("labels must contain both classes");
  }
}

// Composite problem F(x) = smooth(x) + penalty(x) over a flat parameter
// vector. prox also reports the penalty value of its output, which lets
// the trace-norm path reuse the singular values it just computed.
struct CompositeProblem {
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)> smooth;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double, double*)> prox;
  std::function<double(const Eigen::VectorXd&)> penalty;
};

struct FistaResult {
  Eigen::VectorXd x;
  std::vector<double> trace;
};

// FISTA with backtracking line search (halve the step until the local
// quadratic model majorizes the smooth part) and monotone restart: if an
// accelerated step raises the composite objective, the momentum is reset
// and a plain proximal step is taken from the best iterate instead.
FistaResult run_fista(const CompositeProblem& prob, Eigen::VectorXd x0,
                      const SolverConfig& cfg) {
  if (cfg.max_iterations < 1) {
    throw std::invalid_argument("max_iterations must be >= 1");
  }
  if (!(cfg.tolerance > 0.0)) {
    throw std::invalid_argument("tolerance must be positive");
  }
  if (!(cfg.step_size_init > 0.0)) {
    throw std::invalid_argument("step_size_init must be positive");
  }

  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd x_prev = x;
  Eigen::VectorXd y = x;
  double theta = 1.0;
  double step = cfg.step_size_init;

  double objective = prob.smooth(x, nullptr) + prob.penalty(x);
  FistaResult result;
  result.trace.reserve(static_cast<std::size_t>(cfg.max_iterations) + 1);
  result.trace.push_back(objective);

  Eigen::VectorXd grad;
  // Proximal step from `base` with backtracking; returns the candidate and
  // its composite objective.
  const auto prox_step = [&](const Eigen::VectorXd& base, double f_base,
                             const Eigen::VectorXd& g, double* objective_out) {
    Eigen::VectorXd z;
    double penalty_z = 0.0;
    while (true) {
      z = prob.prox(base - step * g, step, &penalty_z);
      const Eigen::VectorXd d = z - base;
      const double f_z = prob.smooth(z, nullptr);
      const double quad =
          f_base + g.dot(d) + d.squaredNorm() / (2.0 * step);
      if (f_z <= quad + 1e-12 * std::abs(quad) + 1e-300) {
        *objective_out = f_z + penalty_z;
        return z;
      }
      step *= 0.5;
      if (step < kMinStep) {
        *objective_out = f_z + penalty_z;
        return z;
      }
    }
  };

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const double f_y = prob.smooth(y, &grad);
    double candidate_objective = 0.0;
    Eigen::VectorXd z = prox_step(y, f_y, grad, &candidate_objective);

    if (candidate_objective > objective) {
      // Monotone restart: drop the momentum and step from x itself.
      theta = 1.0;
      const double f_x = prob.smooth(x, &grad);
      z = prox_step(x, f_x, grad, &candidate_objective);
      if (candidate_objective > objective) {
        z = x;  // step size collapsed; keep the current point
        candidate_objective = objective;
      }
    }

    x_prev = x;
    x = std::move(z);
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    y = x + ((theta - 1.0) / theta_next) * (x - x_prev);
    theta = theta_next;

    result.trace.push_back(candidate_objective);
    const bool converged =
        (objective - candidate_objective) <=
        cfg.tolerance * std::max(1.0, std::abs(objective));
    objective = candidate_objective;
    if (converged) {
      break;
    }
  }

  result.x = std::move(x);
  return result;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1p_exp(double z) {
  if (z > 0.0) {
    return z + std::log1p(std::exp(-z));
  }
  return std::log1p(std::exp(z));
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double tau) {
  if (!(tau >= 0.0)) {
    throw std::invalid_argument("soft_threshold: tau must be >= 0");
  }
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v(i)) - tau;
    out(i) = mag > 0.0 ? (v(i) > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

Eigen::MatrixXd prox_trace_norm(const Eigen::MatrixXd& m, double tau) {
  if (!(tau >= 0.0)) {
    throw std::invalid_argument("prox_trace_norm: tau must be >= 0");
  }
  if (!m.allFinite()) {
    throw std::invalid_argument("prox_trace_norm: matrix has non-finite entries");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd sigma = svd.singularValues();
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    sigma(i) = std::max(sigma(i) - tau, 0.0);
  }
  return svd.matrixU() * sigma.asDiagonal() * svd.matrixV().transpose();
}

double trace_norm(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().sum();
}

double bilinear_logistic_loss(const Eigen::MatrixXd& left,
                              const Eigen::MatrixXd& right,
                              const Eigen::VectorXi& labels,
                              const Eigen::MatrixXd& w,
                              double bias,
                              Eigen::MatrixXd* grad_w,
                              double* grad_bias) {
  const Eigen::Index n = left.rows();
  // margins m_i = l_i^T W r_i + b
  const Eigen::MatrixXd lw = left * w;
  Eigen::VectorXd margins = (lw.cwiseProduct(right)).rowwise().sum();
  margins.array() += bias;

  double loss = 0.0;
  Eigen::VectorXd slope(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = static_cast<double>(labels(i));
    const double z = y * margins(i);
    loss += log1p_exp(-z);
    slope(i) = -y * sigmoid(-z);
  }
  if (grad_w != nullptr) {
    *grad_w = left.transpose() * (slope.asDiagonal() * right);
  }
  if (grad_bias != nullptr) {
    *grad_bias = slope.sum();
  }
  return loss;
}

double linear_logistic_loss(const Eigen::MatrixXd& samples,
                            const Eigen::VectorXi& labels,
                            const Eigen::VectorXd& u,
                            Eigen::VectorXd* grad) {
  const Eigen::Index n = samples.rows();
  const Eigen::VectorXd margins = samples * u;
  double loss = 0.0;
  Eigen::VectorXd slope(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = static_cast<double>(labels(i));
    const double z = y * margins(i);
    loss += log1p_exp(-z);
    slope(i) = -y * sigmoid(-z);
  }
  if (grad != nullptr) {
    *grad = samples.transpose() * slope;
  }
  return loss;
}

TraceNormFit fit_trace_norm_bilinear(const Eigen::MatrixXd& left,
                                     const Eigen::MatrixXd& right,
                                     const Eigen::VectorXi& labels,
                                     double lambda,
                                     const SolverConfig& cfg) {
  const Eigen::Index n = left.rows();
  if (n < 2 || right.rows() != n || labels.size() != n) {
    throw std::invalid_argument(
        "fit_trace_norm_bilinear: left, right and labels must agree on N >= 2");
  }
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("fit_trace_norm_bilinear: lambda must be > 0");
  }
  check_labels(labels);

  const Eigen::Index dl = left.cols();
  const Eigen::Index dr = right.cols();
  const Eigen::Index nw = dl * dr;

  CompositeProblem prob;
  prob.smooth = [&, dl, dr, nw](const Eigen::VectorXd& p, Eigen::VectorXd* g) {
    const Eigen::Map<const Eigen::MatrixXd> w(p.data(), dl, dr);
    if (g == nullptr) {
      return bilinear_logistic_loss(left, right, labels, w, p(nw));
    }
    Eigen::MatrixXd grad_w;
    double grad_b = 0.0;
    const double loss =
        bilinear_logistic_loss(left, right, labels, w, p(nw), &grad_w, &grad_b);
    g->resize(nw + 1);
    Eigen::Map<Eigen::MatrixXd>(g->data(), dl, dr) = grad_w;
    (*g)(nw) = grad_b;
    return loss;
  };
  prob.prox = [&, dl, dr, nw, lambda](const Eigen::VectorXd& p, double step,
                                      double* penalty_out) {
    const Eigen::Map<const Eigen::MatrixXd> w(p.data(), dl, dr);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd sigma = svd.singularValues();
    const double tau = step * lambda;
    double norm = 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      sigma(i) = std::max(sigma(i) - tau, 0.0);
      norm += sigma(i);
    }
    Eigen::VectorXd out(nw + 1);
    Eigen::Map<Eigen::MatrixXd>(out.data(), dl, dr) =
        svd.matrixU() * sigma.asDiagonal() * svd.matrixV().transpose();
    out(nw) = p(nw);  // bias is unpenalized
    if (penalty_out != nullptr) {
      *penalty_out = lambda * norm;
    }
    return out;
  };
  prob.penalty = [&, dl, dr, lambda](const Eigen::VectorXd& p) {
    const Eigen::Map<const Eigen::MatrixXd> w(p.data(), dl, dr);
    return lambda * trace_norm(w);
  };

  FistaResult res = run_fista(prob, Eigen::VectorXd::Zero(nw + 1), cfg);

  TraceNormFit fit;
  fit.w = Eigen::Map<const Eigen::MatrixXd>(res.x.data(), dl, dr);
  fit.bias = res.x(nw);
  fit.objective_trace = std::move(res.trace);
  return fit;
}

L1Fit fit_l1_logistic(const Eigen::MatrixXd& samples,
                      const Eigen::VectorXi& labels,
                      double gamma,
                      const SolverConfig& cfg) {
  const Eigen::Index n = samples.rows();
  if (n < 2 || labels.size() != n) {
    throw std::invalid_argument(
        "fit_l1_logistic: samples and labels must agree on N >= 2");
  }
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("fit_l1_logistic: gamma must be > 0");
  }
  check_labels(labels);

  CompositeProblem prob;
  prob.smooth = [&](const Eigen::VectorXd& u, Eigen::VectorXd* g) {
    return linear_logistic_loss(samples, labels, u, g);
  };
  prob.prox = [gamma](const Eigen::VectorXd& u, double step, double* penalty_out) {
    Eigen::VectorXd z = soft_threshold(u, step * gamma);
    if (penalty_out != nullptr) {
      *penalty_out = gamma * z.lpNorm<1>();
    }
    return z;
  };
  prob.penalty = [gamma](const Eigen::VectorXd& u) {
    return gamma * u.lpNorm<1>();
  };

  FistaResult res = run_fista(prob, Eigen::VectorXd::Zero(samples.cols()), cfg);

  L1Fit fit;
  fit.u = std::move(res.x);
  fit.objective_trace = std::move(res.trace);
  return fit;
}

LinearFit fit_l2_logistic(const Eigen::MatrixXd& samples,
                          const Eigen::VectorXi& labels,
                          double l2,
                          const SolverConfig& cfg) {
  const Eigen::Index n = samples.rows();
  if (n < 2 || labels.size() != n) {
    throw std::invalid_argument(
        "fit_l2_logistic: samples and labels must agree on N >= 2");
  }
  if (!(l2 >= 0.0)) {
    throw std::invalid_argument("fit_l2_logistic: l2 must be >= 0");
  }
  check_labels(labels);

  const Eigen::Index d = samples.cols();

  CompositeProblem prob;
  prob.smooth = [&, d, l2](const Eigen::VectorXd& p, Eigen::VectorXd* g) {
    const Eigen::VectorXd w = p.head(d);
    Eigen::VectorXd margins = samples * w;
    margins.array() += p(d);
    double loss = 0.5 * l2 * w.squaredNorm();
    Eigen::VectorXd slope(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = static_cast<double>(labels(i));
      const double z = y * margins(i);
      loss += log1p_exp(-z);
      slope(i) = -y * sigmoid(-z);
    }
    if (g != nullptr) {
      g->resize(d + 1);
      g->head(d) = samples.transpose() * slope + l2 * w;
      (*g)(d) = slope.sum();
    }
    return loss;
  };
  prob.prox = [](const Eigen::VectorXd& p, double /*step*/, double* penalty_out) {
    if (penalty_out != nullptr) {
      *penalty_out = 0.0;
    }
    return p;
  };
  prob.penalty = [](const Eigen::VectorXd&) { return 0.0; };

  FistaResult res = run_fista(prob, Eigen::VectorXd::Zero(d + 1), cfg);

  LinearFit fit;
  fit.w = res.x.head(d);
  fit.bias = res.x(d);
  fit.objective_trace = std::move(res.trace);
  return fit;
}

namespace {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

double bilinear_gradient_check(const Eigen::MatrixXd& left,
                               const Eigen::MatrixXd& right,
                               const Eigen::VectorXi& labels,
                               const Eigen::MatrixXd& w,
                               double bias,
                               double h) {
  Eigen::MatrixXd grad_w;
  double grad_b = 0.0;
  bilinear_logistic_loss(left, right, labels, w, bias, &grad_w, &grad_b);

  double worst = 0.0;
  Eigen::MatrixXd probe = w;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      probe(i, j) = w(i, j) + h;
      const double hi = bilinear_logistic_loss(left, right, labels, probe, bias);
      probe(i, j) = w(i, j) - h;
      const double lo = bilinear_logistic_loss(left, right, labels, probe, bias);
      probe(i, j) = w(i, j);
      worst = std::max(worst, relative_error(grad_w(i, j), (hi - lo) / (2.0 * h)));
    }
  }
  const double hi = bilinear_logistic_loss(left, right, labels, w, bias + h);
  const double lo = bilinear_logistic_loss(left, right, labels, w, bias - h);
  worst = std::max(worst, relative_error(grad_b, (hi - lo) / (2.0 * h)));
  return worst;
}

double linear_gradient_check(const Eigen::MatrixXd& samples,
                             const Eigen::VectorXi& labels,
                             const Eigen::VectorXd& u,
                             double h) {
  Eigen::VectorXd grad;
  linear_logistic_loss(samples, labels, u, &grad);

  double worst = 0.0;
  Eigen::VectorXd probe = u;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    probe(j) = u(j) + h;
    const double hi = linear_logistic_loss(samples, labels, probe);
    probe(j) = u(j) - h;
    const double lo = linear_logistic_loss(samples, labels, probe);
    probe(j) = u(j);
    worst = std::max(worst, relative_error(grad(j), (hi - lo) / (2.0 * h)));
  }
  return worst;
}

}  // namespace kinverify::optim
