// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kinverify/optim.hpp"
#include "kinverify/select.hpp"
#include "kinverify/types.hpp"

namespace kinverify::kinmodels {

enum class ModelKind { kSbm, kAbm, kRsbm, kConcatBaseline };

std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Bilinear similarity a^T W b.
double bilinear_score(const Eigen::VectorXd& a, const Eigen::MatrixXd& w,
                      const Eigen::VectorXd& b);

/// Per-sample (father-child, mother-child) resemblance probabilities.
/// They always sum to one.
struct PriorPair {
  double p_fc = 0.5;
  double p_mc = 0.5;
};

/// Softmax of the two similarity scores, computed shift-stably.
PriorPair compute_priors(double s_father, double s_mother);

/// Convex pull of the priors toward the 0.5 stabilizing value:
/// p_new = alpha * 0.5 + (1 - alpha) * p_current. Requires alpha in [0, 1];
/// values 0 and 1 are degenerate and meant for testing only.
PriorPair stabilize_priors(const PriorPair& current, double alpha);

/// 1-dim logistic calibration of a raw similarity score.
struct PairCalibration {
  double scale = 0.0;
  double offset = 0.0;
};

/// Symmetric bilinear model: one d x d similarity matrix per parent,
/// combined by a logistic score combiner.
struct SBMModel {
  Eigen::MatrixXd w_father;
  Eigen::MatrixXd w_mother;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double bias = 0.0;
  PairCalibration father_calibration;
  PairCalibration mother_calibration;
};

/// Asymmetric bilinear model: one 2d x d matrix scoring stacked parents
/// against the child.
struct ABMModel {
  Eigen::MatrixXd w_parent;
  double bias = 0.0;
};

/// Relative symmetric bilinear model: SBM plus per-sample resemblance
/// priors, re-estimated over training iterations.
struct RSBMModel {
  Eigen::MatrixXd w_father;
  Eigen::MatrixXd w_mother;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double bias = 0.0;
  double alpha = 0.1;
  double stabilizing_prior = 0.5;
  PairCalibration father_calibration;
  PairCalibration mother_calibration;
};

/// L2 logistic regression on the concatenated [father; mother; child]
/// vector; the simplest tri-subject baseline.
struct ConcatModel {
  Eigen::VectorXd w;
  double bias = 0.0;
};

SBMModel fit_sbm(const std::vector<TripleSample>& triples, double lambda,
                 const optim::SolverConfig& cfg = {});
double predict_sbm(const SBMModel& model, const Eigen::VectorXd& father,
                   const Eigen::VectorXd& mother, const Eigen::VectorXd& child);

ABMModel fit_abm(const std::vector<TripleSample>& triples, double lambda,
                 const optim::SolverConfig& cfg = {});
double predict_abm(const ABMModel& model, const Eigen::VectorXd& father,
                   const Eigen::VectorXd& mother, const Eigen::VectorXd& child);

/// Trains the RSBM: priors start at 0.5 for every sample; each round
/// fits W_f and W_m on prior-scaled parent vectors, recomputes priors
/// from the unscaled similarities and stabilizes them; the final
/// combiner is fit on the relative scores.
RSBMModel fit_rsbm(const std::vector<TripleSample>& triples, double lambda,
                   double alpha, int iterations, const optim::SolverConfig& cfg = {});
double predict_rsbm(const RSBMModel& model, const Eigen::VectorXd& father,
                    const Eigen::VectorXd& mother, const Eigen::VectorXd& child);

ConcatModel fit_concat_baseline(const std::vector<TripleSample>& triples,
                                const optim::SolverConfig& cfg = {});
double predict_concat(const ConcatModel& model, const Eigen::VectorXd& father,
                      const Eigen::VectorXd& mother, const Eigen::VectorXd& child);

enum class ParentRole { kFather, kMother };

/// Bi-subject prediction from one parent and the child, using the 1-dim
/// calibration stored at fit time. The other parent plays no part.
double predict_pair(const SBMModel& model, const Eigen::VectorXd& parent,
                    const Eigen::VectorXd& child, ParentRole role);
double predict_pair(const RSBMModel& model, const Eigen::VectorXd& parent,
                    const Eigen::VectorXd& child, ParentRole role);

/// Tri-subject role forms: which two members form the pair side and
/// which is the query. FM-S and FM-D are the identity; FS-M and FD-M
/// swap mother and child; MS-F and MD-F swap father and child.
enum class RelationForm { kFmS, kFmD, kFsM, kMsF, kFdM, kMdF };

std::string relation_form_name(RelationForm form);
RelationForm parse_relation_form(std::string_view name);

TripleSample permute_roles(const TripleSample& triple, RelationForm form);
std::vector<TripleSample> permute_roles(const std::vector<TripleSample>& triples,
                                        RelationForm form);

/// Per-patch bilinear models fused by a logistic combiner over their
/// probabilities.
struct BlockEnsemble {
  using PatchModel = std::variant<SBMModel, ABMModel, RSBMModel>;

  ModelKind kind = ModelKind::kSbm;
  int block_dim = 128;
  std::vector<int> father_patches;
  std::vector<int> mother_patches;
  std::vector<int> child_patches;
  std::vector<PatchModel> blocks;
  Eigen::VectorXd combiner_weights;
  double combiner_bias = 0.0;
};

/// Fits one model of the given kind per selected patch position (the
/// i-th father/mother/child patches are paired), then a logistic
/// combiner over the per-patch probabilities. Triples must carry full
/// 49-patch features.
BlockEnsemble fit_block_ensemble(ModelKind kind,
                                 const std::vector<TripleSample>& triples,
                                 const select::PatchSelection& selection,
                                 double lambda, double alpha, int iterations,
                                 const optim::SolverConfig& cfg = {});
double predict_block_ensemble(const BlockEnsemble& model,
                              const Eigen::VectorXd& father,
                              const Eigen::VectorXd& mother,
                              const Eigen::VectorXd& child);

using AnyModel = std::variant<SBMModel, ABMModel, RSBMModel, ConcatModel, BlockEnsemble>;

double predict_any(const AnyModel& model, const Eigen::VectorXd& father,
                   const Eigen::VectorXd& mother, const Eigen::VectorXd& child);

/// A trained model plus, for image-level models fitted on selected
/// patches, the selection needed to slice full face features.
struct ModelPackage {
  AnyModel model;
  std::optional<select::PatchSelection> selection;
};

/// Single binary container: magic "KINM", version, kind tag, dims,
/// row-major little-endian float64 matrices, combiner scalars.
void save_model(const std::filesystem::path& path, const ModelPackage& package);
ModelPackage load_model(const std::filesystem::path& path);

}  // namespace kinverify::kinmodels
