// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#include "kinverify/kinmodels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "binio.hpp"

namespace kinverify::kinmodels {

namespace {

// Regularization of every score combiner and calibration fit.
constexpr double kCombinerL2 = 1e-3;

constexpr char kModelMagic[4] = {'K', 'I', 'N', 'M'};
constexpr std::uint16_t kModelFormatVersion = 1;

struct StackedTriples {
  Eigen::MatrixXd fathers;
  Eigen::MatrixXd mothers;
  Eigen::MatrixXd children;
  Eigen::VectorXi labels;
};

StackedTriples stack_triples(const std::vector<TripleSample>& triples) {
  if (triples.size() < 2) {
    throw std::invalid_argument("need at least 2 training triples");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(triples.size());
  const Eigen::Index d = triples.front().father.size();
  StackedTriples out;
  out.fathers.resize(n, d);
  out.mothers.resize(n, d);
  out.children.resize(n, d);
  out.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TripleSample& t = triples[i];
    if (t.father.size() != d || t.mother.size() != d || t.child.size() != d) {
      throw std::invalid_argument("triple feature dimensions are inconsistent");
    }
    out.fathers.row(i) = t.father;
    out.mothers.row(i) = t.mother;
    out.children.row(i) = t.child;
    out.labels(i) = t.label;
  }
  return out;
}

// Row-wise bilinear scores s_i = a_i^T W b_i.
Eigen::VectorXd bilinear_rows(const Eigen::MatrixXd& a, const Eigen::MatrixXd& w,
                              const Eigen::MatrixXd& b) {
  return ((a * w).cwiseProduct(b)).rowwise().sum();
}

struct Combiner {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double bias = 0.0;
};

Combiner fit_combiner(const Eigen::VectorXd& s_father, const Eigen::VectorXd& s_mother,
                      const Eigen::VectorXi& labels, const optim::SolverConfig& cfg) {
  Eigen::MatrixXd scores(s_father.size(), 2);
  scores.col(0) = s_father;
  scores.col(1) = s_mother;
  const optim::LinearFit fit = optim::fit_l2_logistic(scores, labels, kCombinerL2, cfg);
  return {fit.w(0), fit.w(1), fit.bias};
}

PairCalibration fit_calibration(const Eigen::VectorXd& scores,
                                const Eigen::VectorXi& labels,
                                const optim::SolverConfig& cfg) {
  const optim::LinearFit fit =
      optim::fit_l2_logistic(scores, labels, kCombinerL2, cfg);
  return {fit.w(0), fit.bias};
}

void check_dims(const Eigen::VectorXd& father, const Eigen::VectorXd& mother,
                const Eigen::VectorXd& child, Eigen::Index expect) {
  if (father.size() != expect || mother.size() != expect || child.size() != expect) {
    throw std::invalid_argument("prediction inputs do not match the model dimension");
  }
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSbm: return "sbm";
    case ModelKind::kAbm: return "abm";
    case ModelKind::kRsbm: return "rsbm";
    case ModelKind::kConcatBaseline: return "concat-baseline";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "sbm") return ModelKind::kSbm;
  if (name == "abm") return ModelKind::kAbm;
  if (name == "rsbm") return ModelKind::kRsbm;
  if (name == "concat-baseline") return ModelKind::kConcatBaseline;
  throw std::invalid_argument("unknown model kind: " + std::string(name));
}

double bilinear_score(const Eigen::VectorXd& a, const Eigen::MatrixXd& w,
                      const Eigen::VectorXd& b) {
  if (a.size() != w.rows() || b.size() != w.cols()) {
    throw std::invalid_argument("bilinear_score: dimension mismatch");
  }
  return a.dot(w * b);
}

PriorPair compute_priors(double s_father, double s_mother) {
  const double shift = std::max(s_father, s_mother);
  const double e_f = std::exp(s_father - shift);
  const double e_m = std::exp(s_mother - shift);
  const double denom = e_f + e_m;
  return {e_f / denom, e_m / denom};
}

PriorPair stabilize_priors(const PriorPair& current, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("stabilize_priors: alpha must be in [0, 1]");
  }
  return {alpha * 0.5 + (1.0 - alpha) * current.p_fc,
          alpha * 0.5 + (1.0 - alpha) * current.p_mc};
}

// ---------------------------------------------------------------------------
// SBM

SBMModel fit_sbm(const std::vector<TripleSample>& triples, double lambda,
                 const optim::SolverConfig& cfg) {
  const StackedTriples data = stack_triples(triples);

  SBMModel model;
  model.w_father =
      optim::fit_trace_norm_bilinear(data.fathers, data.children, data.labels,
                                     lambda, cfg)
          .w;
  model.w_mother =
      optim::fit_trace_norm_bilinear(data.mothers, data.children, data.labels,
                                     lambda, cfg)
          .w;

  const Eigen::VectorXd s_f = bilinear_rows(data.fathers, model.w_father, data.children);
  const Eigen::VectorXd s_m = bilinear_rows(data.mothers, model.w_mother, data.children);
  const Combiner comb = fit_combiner(s_f, s_m, data.labels, cfg);
  model.beta1 = comb.beta1;
  model.beta2 = comb.beta2;
  model.bias = comb.bias;
  model.father_calibration = fit_calibration(s_f, data.labels, cfg);
  model.mother_calibration = fit_calibration(s_m, data.labels, cfg);
  return model;
}

double predict_sbm(const SBMModel& model, const Eigen::VectorXd& father,
                   const Eigen::VectorXd& mother, const Eigen::VectorXd& child) {
  check_dims(father, mother, child, model.w_father.rows());
  const double s_f = father.dot(model.w_father * child);
  const double s_m = mother.dot(model.w_mother * child);
  return optim::sigmoid(model.beta1 * s_f + model.beta2 * s_m + model.bias);
}

// ---------------------------------------------------------------------------
// ABM

ABMModel fit_abm(const std::vector<TripleSample>& triples, double lambda,
                 const optim::SolverConfig& cfg) {
  const StackedTriples data = stack_triples(triples);
  Eigen::MatrixXd parents(data.fathers.rows(), 2 * data.fathers.cols());
  parents << data.fathers, data.mothers;
  const optim::TraceNormFit fit =
      optim::fit_trace_norm_bilinear(parents, data.children, data.labels, lambda, cfg);
  ABMModel model;
  model.w_parent = fit.w;
  model.bias = fit.bias;
  return model;
}

double predict_abm(const ABMModel& model, const Eigen::VectorXd& father,
                   const Eigen::VectorXd& mother, const Eigen::VectorXd& child) {
  check_dims(father, mother, child, model.w_parent.cols());
  Eigen::VectorXd parents(father.size() + mother.size());
  parents << father, mother;
  return optim::sigmoid(parents.dot(model.w_parent * child) + model.bias);
}

// ---------------------------------------------------------------------------
// RSBM

RSBMModel fit_rsbm(const std::vector<TripleSample>& triples, double lambda,
                   double alpha, int iterations, const optim::SolverConfig& cfg) {
  if (iterations < 1) {
    throw std::invalid_argument("fit_rsbm: iteration count must be >= 1");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("fit_rsbm: alpha must be in [0, 1]");
  }
  const StackedTriples data = stack_triples(triples);
  const Eigen::Index n = data.labels.size();

  Eigen::VectorXd p_fc = Eigen::VectorXd::Constant(n, 0.5);
  Eigen::VectorXd p_mc = Eigen::VectorXd::Constant(n, 0.5);

  RSBMModel model;
  model.alpha = alpha;
  Eigen::VectorXd s_f(n), s_m(n);
  for (int round = 0; round < iterations; ++round) {
    // The current priors enter the pair fits by scaling each sample's
    // parent vector, which scales the bilinear term of Eq-style scores.
    const Eigen::MatrixXd fathers_scaled = p_fc.asDiagonal() * data.fathers;
    const Eigen::MatrixXd mothers_scaled = p_mc.asDiagonal() * data.mothers;
    model.w_father = optim::fit_trace_norm_bilinear(fathers_scaled, data.children,
                                                    data.labels, lambda, cfg)
                         .w;
    model.w_mother = optim::fit_trace_norm_bilinear(mothers_scaled, data.children,
                                                    data.labels, lambda, cfg)
                         .w;
    // Priors are re-estimated from the unscaled similarities.
    s_f = bilinear_rows(data.fathers, model.w_father, data.children);
    s_m = bilinear_rows(data.mothers, model.w_mother, data.children);
    for (Eigen::Index i = 0; i < n; ++i) {
      const PriorPair updated =
          stabilize_priors(compute_priors(s_f(i), s_m(i)), alpha);
      p_fc(i) = updated.p_fc;
      p_mc(i) = updated.p_mc;
    }
  }

  const Eigen::VectorXd rel_f = p_fc.cwiseProduct(s_f);
  const Eigen::VectorXd rel_m = p_mc.cwiseProduct(s_m);
  const Combiner comb = fit_combiner(rel_f, rel_m, data.labels, cfg);
  model.beta1 = comb.beta1;
  model.beta2 = comb.beta2;
  model.bias = comb.bias;
  model.father_calibration = fit_calibration(s_f, data.labels, cfg);
  model.mother_calibration = fit_calibration(s_m, data.labels, cfg);
  return model;
}

double predict_rsbm(const RSBMModel& model, const Eigen::VectorXd& father,
                    const Eigen::VectorXd& mother, const Eigen::VectorXd& child) {
  check_dims(father, mother, child, model.w_father.rows());
  const double s_f = father.dot(model.w_father * child);
  const double s_m = mother.dot(model.w_mother * child);
  const PriorPair priors = stabilize_priors(compute_priors(s_f, s_m), model.alpha);
  const double rel_f = priors.p_fc * s_f;
  const double rel_m = priors.p_mc * s_m;
  return optim::sigmoid(model.beta1 * rel_f + model.beta2 * rel_m + model.bias);
}

// ---------------------------------------------------------------------------
// Concatenation baseline

ConcatModel fit_concat_baseline(const std::vector<TripleSample>& triples,
                                const optim::SolverConfig& cfg) {
  const StackedTriples data = stack_triples(triples);
  const Eigen::Index d = data.fathers.cols();
  Eigen::MatrixXd concat(data.fathers.rows(), 3 * d);
  concat << data.fathers, data.mothers, data.children;
  const optim::LinearFit fit =
      optim::fit_l2_logistic(concat, data.labels, kCombinerL2, cfg);
  ConcatModel model;
  model.w = fit.w;
  model.bias = fit.bias;
  return model;
}

double predict_concat(const ConcatModel& model, const Eigen::VectorXd& father,
                      const Eigen::VectorXd& mother, const Eigen::VectorXd& child) {
  if (father.size() + mother.size() + child.size() != model.w.size()) {
    throw std::invalid_argument("prediction inputs do not match the model dimension");
  }
  Eigen::VectorXd concat(model.w.size());
  concat << father, mother, child;
  return optim::sigmoid(model.w.dot(concat) + model.bias);
}

// ---------------------------------------------------------------------------
// Pair (bi-subject) prediction

namespace {

double predict_pair_impl(const Eigen::MatrixXd& w, const PairCalibration& cal,
                         const Eigen::VectorXd& parent, const Eigen::VectorXd& child) {
  if (parent.size() != w.rows() || child.size() != w.cols()) {
    throw std::invalid_argument("prediction inputs do not match the model dimension");
  }
  const double s = parent.dot(w * child);
  return optim::sigmoid(cal.scale * s + cal.offset);
}

}  // namespace

double predict_pair(const SBMModel& model, const Eigen::VectorXd& parent,
                    const Eigen::VectorXd& child, ParentRole role) {
  return role == ParentRole::kFather
             ? predict_pair_impl(model.w_father, model.father_calibration, parent, child)
             : predict_pair_impl(model.w_mother, model.mother_calibration, parent, child);
}

double predict_pair(const RSBMModel& model, const Eigen::VectorXd& parent,
                    const Eigen::VectorXd& child, ParentRole role) {
  // With a single parent there is no relative prior; the raw pairwise
  // similarity and its calibration are used.
  return role == ParentRole::kFather
             ? predict_pair_impl(model.w_father, model.father_calibration, parent, child)
             : predict_pair_impl(model.w_mother, model.mother_calibration, parent, child);
}

// ---------------------------------------------------------------------------
// Role permutations

std::string relation_form_name(RelationForm form) {
  switch (form) {
    case RelationForm::kFmS: return "FM-S";
    case RelationForm::kFmD: return "FM-D";
    case RelationForm::kFsM: return "FS-M";
    case RelationForm::kMsF: return "MS-F";
    case RelationForm::kFdM: return "FD-M";
    case RelationForm::kMdF: return "MD-F";
  }
  return "?";
}

RelationForm parse_relation_form(std::string_view name) {
  if (name == "FM-S") return RelationForm::kFmS;
  if (name == "FM-D") return RelationForm::kFmD;
  if (name == "FS-M") return RelationForm::kFsM;
  if (name == "MS-F") return RelationForm::kMsF;
  if (name == "FD-M") return RelationForm::kFdM;
  if (name == "MD-F") return RelationForm::kMdF;
  throw std::invalid_argument("unknown relation form: " + std::string(name));
}

TripleSample permute_roles(const TripleSample& triple, RelationForm form) {
  TripleSample out = triple;
  switch (form) {
    case RelationForm::kFmS:
    case RelationForm::kFmD:
      break;  // child is already the query side
    case RelationForm::kFsM:
    case RelationForm::kFdM:
      // pair side = father + child, query = mother
      std::swap(out.mother, out.child);
      break;
    case RelationForm::kMsF:
    case RelationForm::kMdF:
      // pair side = mother + child, query = father
      std::swap(out.father, out.child);
      break;
  }
  return out;
}

std::vector<TripleSample> permute_roles(const std::vector<TripleSample>& triples,
                                        RelationForm form) {
  std::vector<TripleSample> out;
  out.reserve(triples.size());
  for (const TripleSample& t : triples) {
    out.push_back(permute_roles(t, form));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Block-level ensemble

BlockEnsemble fit_block_ensemble(ModelKind kind,
                                 const std::vector<TripleSample>& triples,
                                 const select::PatchSelection& selection,
                                 double lambda, double alpha, int iterations,
                                 const optim::SolverConfig& cfg) {
  if (kind == ModelKind::kConcatBaseline) {
    throw std::invalid_argument("block ensembles support sbm, abm and rsbm only");
  }
  if (selection.k < 1) {
    throw std::invalid_argument("fit_block_ensemble: selection is empty");
  }
  if (static_cast<int>(selection.father_patches.size()) != selection.k ||
      static_cast<int>(selection.mother_patches.size()) != selection.k ||
      static_cast<int>(selection.child_patches.size()) != selection.k) {
    throw std::invalid_argument("fit_block_ensemble: selection lists disagree with K");
  }
  if (triples.size() < 2) {
    throw std::invalid_argument("need at least 2 training triples");
  }
  const select::GroupMap gmap =
      select::GroupMap::for_dimension(triples.front().father.size());

  BlockEnsemble ensemble;
  ensemble.kind = kind;
  ensemble.block_dim = gmap.per_patch;
  ensemble.father_patches = selection.father_patches;
  ensemble.mother_patches = selection.mother_patches;
  ensemble.child_patches = selection.child_patches;

  const Eigen::Index n = static_cast<Eigen::Index>(triples.size());
  Eigen::MatrixXd probabilities(n, selection.k);
  Eigen::VectorXi labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    labels(i) = triples[i].label;
  }

  const auto slice = [&](const Eigen::VectorXd& features, int patch) {
    return features
        .segment(static_cast<Eigen::Index>(patch) * gmap.per_patch, gmap.per_patch)
        .eval();
  };

  for (int b = 0; b < selection.k; ++b) {
    std::vector<TripleSample> block_triples;
    block_triples.reserve(triples.size());
    for (const TripleSample& t : triples) {
      TripleSample bt;
      bt.father = slice(t.father, selection.father_patches[b]);
      bt.mother = slice(t.mother, selection.mother_patches[b]);
      bt.child = slice(t.child, selection.child_patches[b]);
      bt.label = t.label;
      bt.family_id = t.family_id;
      block_triples.push_back(std::move(bt));
    }
    switch (kind) {
      case ModelKind::kSbm: {
        SBMModel m = fit_sbm(block_triples, lambda, cfg);
        for (Eigen::Index i = 0; i < n; ++i) {
          probabilities(i, b) = predict_sbm(m, block_triples[i].father,
                                            block_triples[i].mother,
                                            block_triples[i].child);
        }
        ensemble.blocks.emplace_back(std::move(m));
        break;
      }
      case ModelKind::kAbm: {
        ABMModel m = fit_abm(block_triples, lambda, cfg);
        for (Eigen::Index i = 0; i < n; ++i) {
          probabilities(i, b) = predict_abm(m, block_triples[i].father,
                                            block_triples[i].mother,
                                            block_triples[i].child);
        }
        ensemble.blocks.emplace_back(std::move(m));
        break;
      }
      case ModelKind::kRsbm: {
        RSBMModel m = fit_rsbm(block_triples, lambda, alpha, iterations, cfg);
        for (Eigen::Index i = 0; i < n; ++i) {
          probabilities(i, b) = predict_rsbm(m, block_triples[i].father,
                                             block_triples[i].mother,
                                             block_triples[i].child);
        }
        ensemble.blocks.emplace_back(std::move(m));
        break;
      }
      case ModelKind::kConcatBaseline:
        break;  // rejected above
    }
  }

  const optim::LinearFit comb =
      optim::fit_l2_logistic(probabilities, labels, kCombinerL2, cfg);
  ensemble.combiner_weights = comb.w;
  ensemble.combiner_bias = comb.bias;
  return ensemble;
}

double predict_block_ensemble(const BlockEnsemble& model,
                              const Eigen::VectorXd& father,
                              const Eigen::VectorXd& mother,
                              const Eigen::VectorXd& child) {
  const Eigen::Index expect =
      static_cast<Eigen::Index>(model.block_dim) * 49;
  check_dims(father, mother, child, expect);
  const auto slice = [&](const Eigen::VectorXd& features, int patch) {
    return features
        .segment(static_cast<Eigen::Index>(patch) * model.block_dim, model.block_dim)
        .eval();
  };
  const int k = static_cast<int>(model.blocks.size());
  double combined = model.combiner_bias;
  for (int b = 0; b < k; ++b) {
    const Eigen::VectorXd f = slice(father, model.father_patches[b]);
    const Eigen::VectorXd m = slice(mother, model.mother_patches[b]);
    const Eigen::VectorXd c = slice(child, model.child_patches[b]);
    const double p = std::visit(
        [&](const auto& block) {
          using T = std::decay_t<decltype(block)>;
          if constexpr (std::is_same_v<T, SBMModel>) {
            return predict_sbm(block, f, m, c);
          } else if constexpr (std::is_same_v<T, ABMModel>) {
            return predict_abm(block, f, m, c);
          } else {
            return predict_rsbm(block, f, m, c);
          }
        },
        model.blocks[b]);
    combined += model.combiner_weights(b) * p;
  }
  return optim::sigmoid(combined);
}

double predict_any(const AnyModel& model, const Eigen::VectorXd& father,
                   const Eigen::VectorXd& mother, const Eigen::VectorXd& child) {
  return std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SBMModel>) {
          return predict_sbm(m, father, mother, child);
        } else if constexpr (std::is_same_v<T, ABMModel>) {
          return predict_abm(m, father, mother, child);
        } else if constexpr (std::is_same_v<T, RSBMModel>) {
          return predict_rsbm(m, father, mother, child);
        } else if constexpr (std::is_same_v<T, ConcatModel>) {
          return predict_concat(m, father, mother, child);
        } else {
          return predict_block_ensemble(m, father, mother, child);
        }
      },
      model);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using binio::ByteReader;

enum : std::uint16_t {
  kTagSbm = 1,
  kTagAbm = 2,
  kTagRsbm = 3,
  kTagConcat = 4,
  kTagBlock = 5,
};

void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      binio::put_f64(out, m(i, j));
    }
  }
}

Eigen::MatrixXd get_matrix(ByteReader& reader, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = reader.f64();
    }
  }
  return m;
}

void put_sbm_payload(std::string& out, const Eigen::MatrixXd& w_father,
                     const Eigen::MatrixXd& w_mother, double beta1, double beta2,
                     double bias, const PairCalibration& fcal,
                     const PairCalibration& mcal) {
  binio::put_u32(out, static_cast<std::uint32_t>(w_father.rows()));
  put_matrix(out, w_father);
  put_matrix(out, w_mother);
  binio::put_f64(out, beta1);
  binio::put_f64(out, beta2);
  binio::put_f64(out, bias);
  binio::put_f64(out, fcal.scale);
  binio::put_f64(out, fcal.offset);
  binio::put_f64(out, mcal.scale);
  binio::put_f64(out, mcal.offset);
}

void put_model_payload(std::string& out, const SBMModel& m) {
  put_sbm_payload(out, m.w_father, m.w_mother, m.beta1, m.beta2, m.bias,
                  m.father_calibration, m.mother_calibration);
}

void put_model_payload(std::string& out, const RSBMModel& m) {
  put_sbm_payload(out, m.w_father, m.w_mother, m.beta1, m.beta2, m.bias,
                  m.father_calibration, m.mother_calibration);
  binio::put_f64(out, m.alpha);
  binio::put_f64(out, m.stabilizing_prior);
}

void put_model_payload(std::string& out, const ABMModel& m) {
  binio::put_u32(out, static_cast<std::uint32_t>(m.w_parent.cols()));
  put_matrix(out, m.w_parent);
  binio::put_f64(out, m.bias);
}

void put_model_payload(std::string& out, const ConcatModel& m) {
  binio::put_u32(out, static_cast<std::uint32_t>(m.w.size()));
  for (Eigen::Index i = 0; i < m.w.size(); ++i) {
    binio::put_f64(out, m.w(i));
  }
  binio::put_f64(out, m.bias);
}

SBMModel get_sbm_payload(ByteReader& reader) {
  const Eigen::Index d = reader.u32();
  SBMModel m;
  m.w_father = get_matrix(reader, d, d);
  m.w_mother = get_matrix(reader, d, d);
  m.beta1 = reader.f64();
  m.beta2 = reader.f64();
  m.bias = reader.f64();
  m.father_calibration = {reader.f64(), reader.f64()};
  m.mother_calibration = {reader.f64(), reader.f64()};
  return m;
}

RSBMModel get_rsbm_payload(ByteReader& reader) {
  const SBMModel base = get_sbm_payload(reader);
  RSBMModel m;
  m.w_father = base.w_father;
  m.w_mother = base.w_mother;
  m.beta1 = base.beta1;
  m.beta2 = base.beta2;
  m.bias = base.bias;
  m.father_calibration = base.father_calibration;
  m.mother_calibration = base.mother_calibration;
  m.alpha = reader.f64();
  m.stabilizing_prior = reader.f64();
  return m;
}

ABMModel get_abm_payload(ByteReader& reader) {
  const Eigen::Index d = reader.u32();
  ABMModel m;
  m.w_parent = get_matrix(reader, 2 * d, d);
  m.bias = reader.f64();
  return m;
}

ConcatModel get_concat_payload(ByteReader& reader) {
  const Eigen::Index dim = reader.u32();
  ConcatModel m;
  m.w.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    m.w(i) = reader.f64();
  }
  m.bias = reader.f64();
  return m;
}

void put_patch_list(std::string& out, const std::vector<int>& patches) {
  for (int p : patches) {
    binio::put_u32(out, static_cast<std::uint32_t>(p));
  }
}

std::vector<int> get_patch_list(ByteReader& reader, int count) {
  std::vector<int> patches(count);
  for (int i = 0; i < count; ++i) {
    patches[i] = static_cast<int>(reader.u32());
  }
  return patches;
}

std::uint16_t model_tag(const AnyModel& model) {
  return std::visit(
      [](const auto& m) -> std::uint16_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SBMModel>) return kTagSbm;
        if constexpr (std::is_same_v<T, ABMModel>) return kTagAbm;
        if constexpr (std::is_same_v<T, RSBMModel>) return kTagRsbm;
        if constexpr (std::is_same_v<T, ConcatModel>) return kTagConcat;
        return kTagBlock;
      },
      model);
}

}  // namespace

void save_model(const std::filesystem::path& path, const ModelPackage& package) {
  std::string out;
  out.append(kModelMagic, 4);
  binio::put_u16(out, kModelFormatVersion);
  binio::put_u16(out, model_tag(package.model));
  binio::put_u8(out, package.selection.has_value() ? 1 : 0);
  if (package.selection) {
    const select::PatchSelection& sel = *package.selection;
    binio::put_u32(out, static_cast<std::uint32_t>(sel.k));
    put_patch_list(out, sel.father_patches);
    put_patch_list(out, sel.mother_patches);
    put_patch_list(out, sel.child_patches);
  }

  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BlockEnsemble>) {
          std::uint16_t inner = kTagSbm;
          if (m.kind == ModelKind::kAbm) inner = kTagAbm;
          if (m.kind == ModelKind::kRsbm) inner = kTagRsbm;
          binio::put_u16(out, inner);
          binio::put_u32(out, static_cast<std::uint32_t>(m.blocks.size()));
          binio::put_u32(out, static_cast<std::uint32_t>(m.block_dim));
          put_patch_list(out, m.father_patches);
          put_patch_list(out, m.mother_patches);
          put_patch_list(out, m.child_patches);
          for (const auto& block : m.blocks) {
            std::visit([&](const auto& bm) { put_model_payload(out, bm); }, block);
          }
          for (Eigen::Index i = 0; i < m.combiner_weights.size(); ++i) {
            binio::put_f64(out, m.combiner_weights(i));
          }
          binio::put_f64(out, m.combiner_bias);
        } else {
          put_model_payload(out, m);
        }
      },
      package.model);

  binio::write_file_bytes(path, out);
}

ModelPackage load_model(const std::filesystem::path& path) {
  const std::string bytes = binio::read_file_bytes(path);
  ByteReader reader(bytes, path.string());
  if (reader.str(4) != std::string(kModelMagic, 4)) {
    throw std::runtime_error("model file " + path.string() + " has a bad magic");
  }
  const std::uint16_t version = reader.u16();
  if (version != kModelFormatVersion) {
    throw std::runtime_error("model file " + path.string() +
                             " has unsupported format version " +
                             std::to_string(version));
  }
  const std::uint16_t tag = reader.u16();
  ModelPackage package{AnyModel{SBMModel{}}, std::nullopt};
  if (reader.u8() != 0) {
    select::PatchSelection sel;
    sel.k = static_cast<int>(reader.u32());
    sel.father_patches = get_patch_list(reader, sel.k);
    sel.mother_patches = get_patch_list(reader, sel.k);
    sel.child_patches = get_patch_list(reader, sel.k);
    sel.votes_father = Eigen::VectorXd::Zero(49);
    sel.votes_mother = Eigen::VectorXd::Zero(49);
    sel.votes_child = Eigen::VectorXd::Zero(49);
    package.selection = std::move(sel);
  }

  switch (tag) {
    case kTagSbm:
      package.model = get_sbm_payload(reader);
      break;
    case kTagAbm:
      package.model = get_abm_payload(reader);
      break;
    case kTagRsbm:
      package.model = get_rsbm_payload(reader);
      break;
    case kTagConcat:
      package.model = get_concat_payload(reader);
      break;
    case kTagBlock: {
      BlockEnsemble ensemble;
      const std::uint16_t inner = reader.u16();
      const int k = static_cast<int>(reader.u32());
      ensemble.block_dim = static_cast<int>(reader.u32());
      ensemble.father_patches = get_patch_list(reader, k);
      ensemble.mother_patches = get_patch_list(reader, k);
      ensemble.child_patches = get_patch_list(reader, k);
      switch (inner) {
        case kTagSbm: ensemble.kind = ModelKind::kSbm; break;
        case kTagAbm: ensemble.kind = ModelKind::kAbm; break;
        case kTagRsbm: ensemble.kind = ModelKind::kRsbm; break;
        default:
          throw std::runtime_error("model file " + path.string() +
                                   " has an unknown block kind");
      }
      for (int b = 0; b < k; ++b) {
        if (inner == kTagSbm) {
          ensemble.blocks.emplace_back(get_sbm_payload(reader));
        } else if (inner == kTagAbm) {
          ensemble.blocks.emplace_back(get_abm_payload(reader));
        } else {
          ensemble.blocks.emplace_back(get_rsbm_payload(reader));
        }
      }
      ensemble.combiner_weights.resize(k);
      for (int b = 0; b < k; ++b) {
        ensemble.combiner_weights(b) = reader.f64();
      }
      ensemble.combiner_bias = reader.f64();
      package.model = std::move(ensemble);
      break;
    }
    default:
      throw std::runtime_error("model file " + path.string() +
                               " has an unknown kind tag " + std::to_string(tag));
  }
  return package;
}

}  // namespace kinverify::kinmodels
