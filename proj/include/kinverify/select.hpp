// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "kinverify/optim.hpp"
#include "kinverify/types.hpp"

namespace kinverify::select {

/// Maps every feature index of a face vector to its patch.
struct GroupMap {
  int patches = 49;
  int per_patch = 128;

  GroupMap() = default;
  GroupMap(int patches, int per_patch) : patches(patches), per_patch(per_patch) {}

  int feature_count() const { return patches * per_patch; }
  int patch_of_feature(int feature) const { return feature / per_patch; }

  /// The 49-patch, 128-dim layout produced by facefeat.
  static GroupMap canonical() { return GroupMap(49, 128); }
  /// Deduces per-patch width from a face dimension (must divide evenly).
  static GroupMap for_dimension(Eigen::Index face_dim);
};

/// Per-role top-K patch choices plus the vote totals behind them.
struct PatchSelection {
  int k = 0;
  std::vector<int> father_patches;
  std::vector<int> mother_patches;
  std::vector<int> child_patches;
  Eigen::VectorXd votes_father;
  Eigen::VectorXd votes_mother;
  Eigen::VectorXd votes_child;
  /// Roles whose votes were all zero and fell back to the tie-break order.
  std::vector<std::string> degenerate_roles;

  /// Trivial selection keeping every patch for every role.
  static PatchSelection all_patches(int patches = 49);

  std::string to_json() const;
  static PatchSelection from_json(const std::string& text);
};

/// L1 logistic weights over concatenated [parent; child] vectors; the
/// first half scores parent features, the second half child features.
Eigen::VectorXd fit_pair_weights(const Eigen::MatrixXd& parent_feats,
                                 const Eigen::MatrixXd& child_feats,
                                 const Eigen::VectorXi& labels,
                                 double gamma,
                                 const optim::SolverConfig& cfg = {});

struct RoleVotes {
  Eigen::VectorXd father;
  Eigen::VectorXd mother;
  Eigen::VectorXd child;
};

/// Aggregates |u| mass per patch: father votes from the first half of
/// u_f, mother votes from the first half of u_m, child votes from the
/// second halves of both.
RoleVotes vote_patches(const Eigen::VectorXd& u_father,
                       const Eigen::VectorXd& u_mother,
                       const GroupMap& gmap);

/// Indices of the K largest votes, ties broken toward the lower patch
/// index; returned in ascending order.
std::vector<int> select_top_k(const Eigen::VectorXd& votes, int k);

/// The two-step selection: L1 pair fits for father-child and
/// mother-child, patch voting, then an independent top-K per role.
/// Triples must carry full 49-patch features.
PatchSelection fit_selection(const std::vector<TripleSample>& triples,
                             double gamma, int k,
                             const optim::SolverConfig& cfg = {});

/// Restricts a sample's three feature vectors to the selected patches of
/// the matching role.
TripleSample apply_selection(const TripleSample& sample, const PatchSelection& selection,
                             const GroupMap& gmap);
std::vector<TripleSample> apply_selection(const std::vector<TripleSample>& samples,
                                          const PatchSelection& selection,
                                          const GroupMap& gmap);

}  // namespace kinverify::select
