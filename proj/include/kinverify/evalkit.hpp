// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kinverify/datakit.hpp"
#include "kinverify/kinmodels.hpp"
#include "kinverify/optim.hpp"

namespace kinverify::evalkit {

/// Fraction of decisions matching labels; both are +/-1 lists.
double accuracy(const std::vector<int>& decisions, const std::vector<int>& labels);

struct RocCurve {
  /// (false positive rate, true positive rate), from (0,0) to (1,1),
  /// nondecreasing in both coordinates.
  std::vector<std::pair<double, double>> points;
  double auc = 0.0;
};

/// Threshold sweep over the unique scores (decision positive when score
/// >= threshold); AUC by the trapezoid rule, which half-counts ties.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

struct FoldResult {
  int fold = 0;  // 1-based
  double accuracy = 0.0;
  double auc = 0.0;
  std::vector<std::pair<double, double>> roc_points;
};

struct ProtocolConfig {
  kinmodels::ModelKind kind = kinmodels::ModelKind::kSbm;
  bool block_level = false;
  bool feature_selection = false;
  int k = 25;
  double lambda = 5.0;
  double gamma = 0.08;
  double alpha = 0.1;
  int rsbm_iterations = 5;
  std::uint64_t seed = 0;
  optim::SolverConfig solver{};
  int jobs = 1;
  /// When set, only the matching relation is evaluated and its triples
  /// are permuted into this tri-subject form first.
  std::optional<kinmodels::RelationForm> form;

  std::string method_name() const;
};

struct RelationReport {
  std::string label;  // relation or permuted-form name
  std::array<FoldResult, 5> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over the 5 folds
  double mean_auc = 0.0;
  /// Pooled test scores across folds, for the ROC output.
  RocCurve pooled_roc;
};

struct ProtocolReport {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<RelationReport> relations;

  std::string to_json() const;
  std::string to_text() const;
};

/// Test instrumentation: records, per fit context (relation/fold tag),
/// the family ids of every sample that enters a fit call, so leakage of
/// test folds into training can be asserted.
struct FitAudit {
  std::mutex mutex;
  std::map<std::string, std::set<std::string>> family_ids_by_context;

  void note(const std::string& context, const std::vector<TripleSample>& samples);
};

/// The five-fold protocol: per relation and fold, negatives are generated
/// independently on each side, selection (when enabled) and all fits see
/// the training side only, and the test side is scored at threshold 0.5.
/// Fully deterministic given the seed.
ProtocolReport run_protocol(const ProtocolConfig& config,
                            const std::vector<datakit::RelationFamilies>& data,
                            const datakit::FoldPlan& plan,
                            FitAudit* audit = nullptr);

/// Fits the configured model on one labeled training set, running
/// feature selection first when enabled; used by the protocol folds and
/// by the train command.
kinmodels::ModelPackage fit_for_config(const ProtocolConfig& config,
                                       const std::vector<TripleSample>& train,
                                       FitAudit* audit = nullptr,
                                       const std::string& audit_context = "train");

/// Probability of a sample under a fitted package, slicing selected
/// patches when the package carries a selection.
double predict_for_package(const kinmodels::ModelPackage& package,
                           const TripleSample& sample);

}  // namespace kinverify::evalkit
