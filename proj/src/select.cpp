// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#include "kinverify/select.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace kinverify::select {

using nlohmann::json;
using nlohmann::ordered_json;

GroupMap GroupMap::for_dimension(Eigen::Index face_dim) {
  if (face_dim <= 0 || face_dim % 49 != 0) {
    throw std::invalid_argument(
        "feature dimension " + std::to_string(face_dim) +
        " is not divisible into 49 patches");
  }
  return GroupMap(49, static_cast<int>(face_dim / 49));
}

PatchSelection PatchSelection::all_patches(int patches) {
  PatchSelection sel;
  sel.k = patches;
  sel.father_patches.resize(patches);
  std::iota(sel.father_patches.begin(), sel.father_patches.end(), 0);
  sel.mother_patches = sel.father_patches;
  sel.child_patches = sel.father_patches;
  sel.votes_father = Eigen::VectorXd::Zero(patches);
  sel.votes_mother = Eigen::VectorXd::Zero(patches);
  sel.votes_child = Eigen::VectorXd::Zero(patches);
  return sel;
}

std::string PatchSelection::to_json() const {
  const auto votes_array = [](const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      arr.push_back(v(i));
    }
    return arr;
  };
  ordered_json doc;
  doc["k"] = k;
  doc["father"] = father_patches;
  doc["mother"] = mother_patches;
  doc["child"] = child_patches;
  doc["votes"] = {{"father", votes_array(votes_father)},
                  {"mother", votes_array(votes_mother)},
                  {"child", votes_array(votes_child)}};
  if (!degenerate_roles.empty()) {
    doc["degenerate_roles"] = degenerate_roles;
  }
  return doc.dump(2);
}

PatchSelection PatchSelection::from_json(const std::string& text) {
  const json doc = json::parse(text);
  PatchSelection sel;
  sel.k = doc.at("k").get<int>();
  sel.father_patches = doc.at("father").get<std::vector<int>>();
  sel.mother_patches = doc.at("mother").get<std::vector<int>>();
  sel.child_patches = doc.at("child").get<std::vector<int>>();
  const auto votes_vector = [&](const char* role) {
    const auto arr = doc.at("votes").at(role).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(arr.data(),
                                             static_cast<Eigen::Index>(arr.size()))
        .eval();
  };
  sel.votes_father = votes_vector("father");
  sel.votes_mother = votes_vector("mother");
  sel.votes_child = votes_vector("child");
  if (doc.contains("degenerate_roles")) {
    sel.degenerate_roles = doc.at("degenerate_roles").get<std::vector<std::string>>();
  }
  return sel;
}

Eigen::VectorXd fit_pair_weights(const Eigen::MatrixXd& parent_feats,
                                 const Eigen::MatrixXd& child_feats,
                                 const Eigen::VectorXi& labels,
                                 double gamma,
                                 const optim::SolverConfig& cfg) {
  if (parent_feats.rows() != child_feats.rows() ||
      parent_feats.cols() != child_feats.cols()) {
    throw std::invalid_argument(
        "fit_pair_weights: parent and child features must have equal shape");
  }
  const Eigen::Index n = parent_feats.rows();
  const Eigen::Index d = parent_feats.cols();
  Eigen::MatrixXd pairs(n, 2 * d);
  pairs << parent_feats, child_feats;
  return optim::fit_l1_logistic(pairs, labels, gamma, cfg).u;
}

RoleVotes vote_patches(const Eigen::VectorXd& u_father,
                       const Eigen::VectorXd& u_mother,
                       const GroupMap& gmap) {
  const Eigen::Index d = gmap.feature_count();
  if (u_father.size() != 2 * d || u_mother.size() != 2 * d) {
    throw std::invalid_argument(
        "vote_patches: weight vectors must have length 2 * patches * per_patch");
  }
  RoleVotes votes;
  votes.father = Eigen::VectorXd::Zero(gmap.patches);
  votes.mother = Eigen::VectorXd::Zero(gmap.patches);
  votes.child = Eigen::VectorXd::Zero(gmap.patches);
  for (Eigen::Index j = 0; j < d; ++j) {
    const int patch = gmap.patch_of_feature(static_cast<int>(j));
    votes.father(patch) += std::abs(u_father(j));
    votes.mother(patch) += std::abs(u_mother(j));
    // a child patch receives votes from both pair fits
    votes.child(patch) += std::abs(u_father(d + j)) + std::abs(u_mother(d + j));
  }
  return votes;
}

std::vector<int> select_top_k(const Eigen::VectorXd& votes, int k) {
  const int n = static_cast<int>(votes.size());
  if (k < 1 || k > n) {
    throw std::invalid_argument("select_top_k: K must be in [1, " +
                                std::to_string(n) + "]");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (votes(a) != votes(b)) return votes(a) > votes(b);
    return a < b;
  });
  std::vector<int> picked(order.begin(), order.begin() + k);
  std::sort(picked.begin(), picked.end());
  return picked;
}

PatchSelection fit_selection(const std::vector<TripleSample>& triples,
                             double gamma, int k,
                             const optim::SolverConfig& cfg) {
  if (triples.empty()) {
    throw std::invalid_argument("fit_selection: no samples");
  }
  const GroupMap gmap = GroupMap::for_dimension(triples.front().father.size());
  if (k < 1 || k > gmap.patches) {
    throw std::invalid_argument("fit_selection: K must be in [1, 49]");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(triples.size());
  const Eigen::Index d = gmap.feature_count();
  Eigen::MatrixXd fathers(n, d), mothers(n, d), children(n, d);
  Eigen::VectorXi labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TripleSample& t = triples[i];
    if (t.father.size() != d || t.mother.size() != d || t.child.size() != d) {
      throw std::invalid_argument("fit_selection: inconsistent feature dimensions");
    }
    fathers.row(i) = t.father;
    mothers.row(i) = t.mother;
    children.row(i) = t.child;
    labels(i) = t.label;
  }

  const Eigen::VectorXd u_father =
      fit_pair_weights(fathers, children, labels, gamma, cfg);
  const Eigen::VectorXd u_mother =
      fit_pair_weights(mothers, children, labels, gamma, cfg);
  const RoleVotes votes = vote_patches(u_father, u_mother, gmap);

  PatchSelection sel;
  sel.k = k;
  sel.votes_father = votes.father;
  sel.votes_mother = votes.mother;
  sel.votes_child = votes.child;
  sel.father_patches = select_top_k(votes.father, k);
  sel.mother_patches = select_top_k(votes.mother, k);
  sel.child_patches = select_top_k(votes.child, k);
  if (votes.father.isZero(0.0)) sel.degenerate_roles.push_back("father");
  if (votes.mother.isZero(0.0)) sel.degenerate_roles.push_back("mother");
  if (votes.child.isZero(0.0)) sel.degenerate_roles.push_back("child");
  return sel;
}

namespace {

Eigen::VectorXd slice_patches(const Eigen::VectorXd& features,
                              const std::vector<int>& patches,
                              const GroupMap& gmap) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(patches.size()) * gmap.per_patch);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    out.segment(static_cast<Eigen::Index>(i) * gmap.per_patch, gmap.per_patch) =
        features.segment(static_cast<Eigen::Index>(patches[i]) * gmap.per_patch,
                         gmap.per_patch);
  }
  return out;
}

}  // namespace

TripleSample apply_selection(const TripleSample& sample, const PatchSelection& selection,
                             const GroupMap& gmap) {
  if (sample.father.size() != gmap.feature_count()) {
    throw std::invalid_argument("apply_selection: sample does not match the group map");
  }
  TripleSample out;
  out.father = slice_patches(sample.father, selection.father_patches, gmap);
  out.mother = slice_patches(sample.mother, selection.mother_patches, gmap);
  out.child = slice_patches(sample.child, selection.child_patches, gmap);
  out.label = sample.label;
  out.family_id = sample.family_id;
  return out;
}

std::vector<TripleSample> apply_selection(const std::vector<TripleSample>& samples,
                                          const PatchSelection& selection,
                                          const GroupMap& gmap) {
  std::vector<TripleSample> out;
  out.reserve(samples.size());
  for (const TripleSample& s : samples) {
    out.push_back(apply_selection(s, selection, gmap));
  }
  return out;
}

}  // namespace kinverify::select
