// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "kinverify/types.hpp"

namespace kinverify::datakit {

enum class Relation { kFmS, kFmD };

std::string relation_name(Relation relation);
Relation parse_relation(std::string_view name);

/// One family row of a manifest: identifiers plus the image paths (or
/// feature-cache keys) of the three members.
struct FamilyRecord {
  std::string family_id;
  Relation relation = Relation::kFmS;
  std::string father;
  std::string mother;
  std::string child;
  std::optional<int> fold;
};

/// Reads a JSON-lines manifest, one object per family:
/// {"family_id":..., "relation":"FM-S", "father":..., "mother":..., "child":...}
std::vector<FamilyRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path,
                   const std::vector<FamilyRecord>& records);

/// Derives a child seed from a base seed and a stream name, so that all
/// randomness in a run flows from one user-facing seed.
std::uint64_t substream_seed(std::uint64_t base, std::string_view name);

/// Deterministic random source. The engine is the standardized
/// mt19937_64; the bounded-int and normal samplers are implemented here
/// rather than taken from <random> so that streams do not depend on the
/// standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Uniform double in [0, 1).
  double uniform();
  /// Standard normal via the polar method.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Produces one negative triple per family: a seeded random derangement
/// assigns every child to a different family's parents, so each couple
/// and each child appears exactly once and no child meets its own
/// parents. Input families must all belong to one relation type.
std::vector<TripleSample> generate_negatives(
    const std::vector<TripleSample>& families, std::uint64_t seed);

/// Five test ranges per relation, 1-based inclusive over the family
/// ordering of the manifest.
struct FoldPlan {
  struct Range {
    int begin = 0;
    int end = 0;
  };

  std::map<Relation, std::array<Range, 5>> ranges;

  /// The published TSKinFace fold index table.
  static FoldPlan tskinface();
  /// Near-equal fold sizes: the first four folds take floor(n/5) families,
  /// the last takes the rest.
  static std::array<Range, 5> even_ranges(int family_count);

  static FoldPlan load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct FoldSplit {
  std::vector<int> train_indices;
  std::vector<int> test_indices;
};

/// Expands fold ranges over family_count families into train/test index
/// sets; the ranges must exactly partition [1, family_count].
std::array<FoldSplit, 5> kfold_split(int family_count,
                                     const std::array<FoldPlan::Range, 5>& ranges);

inline constexpr std::uint16_t kDescriptorVersion = 1;

/// Binary feature cache keyed by image path. Values are stored as 32-bit
/// floats; round trips are bit-exact.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::uint16_t version) : version_(version) {}

  /// Missing file yields an empty store; a version mismatch yields an
  /// empty store (cache miss); a bad magic is an error.
  static FeatureStore load(const std::filesystem::path& path,
                           std::uint16_t expected_version = kDescriptorVersion);
  void save(const std::filesystem::path& path) const;

  std::optional<Eigen::VectorXf> read(const std::string& key) const;
  void write(const std::string& key, const Eigen::VectorXf& values);
  bool contains(const std::string& key) const;

  std::size_t size() const { return entries_.size(); }
  int dim() const { return dim_; }
  std::uint16_t version() const { return version_; }

 private:
  std::uint16_t version_ = kDescriptorVersion;
  int dim_ = -1;
  std::map<std::string, Eigen::VectorXf> entries_;
};

/// Families of one relation with resolved features; labels are +1.
struct RelationFamilies {
  Relation relation = Relation::kFmS;
  std::vector<TripleSample> families;
};

/// Joins manifest records with cached features, grouped by relation in
/// manifest order. Missing cache entries are an error naming the key.
std::vector<RelationFamilies> assemble_families(
    const std::vector<FamilyRecord>& records, const FeatureStore& store);

// ---------------------------------------------------------------------------
// Synthetic planted-model data

enum class SynthMode { kSbm, kAbm, kPatches, kResemblance };

std::string synth_mode_name(SynthMode mode);
SynthMode parse_synth_mode(std::string_view name);

struct SynthConfig {
  SynthMode mode = SynthMode::kSbm;
  /// Feature dimension; in kPatches mode this is the per-patch dimension
  /// and faces have 49*dim features.
  int dim = 16;
  int n_pos = 1000;
  int rank = 3;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Positive triples must score at least this under the planted model.
  /// In the bilinear modes deranged negatives are kept strictly below
  /// negative_margin, so a noiseless dataset is separable with a score
  /// gap; in kPatches mode negatives are instead drawn below the
  /// mirrored margin, giving the linear selection machinery a
  /// recoverable signed signal.
  double margin = 2.0;
  double negative_margin = 0.0;
  /// kPatches: number of informative patches per role.
  int planted_patches = 10;
  /// kSbm / kAbm: weight of the heritable low-rank component mixed into
  /// each positive child on top of its spherical draw.
  double signal_strength = 3.0;
  /// kResemblance: mixing weights of the dominant / other parent.
  double resemblance_high = 0.8;
  double resemblance_low = 0.2;
};

struct SynthData {
  SynthConfig config;
  std::vector<TripleSample> positives;  // one per family, label +1
  /// Derangement of the positives (bilinear and resemblance modes), or
  /// independently drawn below-margin triples (kPatches).
  std::vector<TripleSample> negatives;

  // Ground truth, populated per mode.
  Eigen::MatrixXd w_father, w_mother;          // kSbm
  Eigen::MatrixXd w_parent;                    // kAbm (2d x d)
  Eigen::VectorXd teacher_father, teacher_mother;  // kPatches (2*face_dim each)
  std::vector<int> father_patches, mother_patches, child_patches;  // kPatches
  std::vector<int> dominant_parent;            // kResemblance, 0=father 1=mother

  std::vector<TripleSample> all() const;
};

SynthData synth_generate(const SynthConfig& config);

/// Generative score of a triple under the planted model (kSbm, kAbm and
/// kPatches modes only).
double planted_score(const SynthData& data, const TripleSample& triple);

}  // namespace kinverify::datakit
