// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#pragma once

#include <Eigen/Core>
#include <string>

namespace kinverify {

/// One (father, mother, child) feature group with a kinship label.
/// Features of the three members always share one dimension d.
struct TripleSample {
  Eigen::VectorXd father;
  Eigen::VectorXd mother;
  Eigen::VectorXd child;
  int label = 1;  // +1 kin, -1 non-kin
  std::string family_id;
};

}  // namespace kinverify
