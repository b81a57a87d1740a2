// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#include "kinverify/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "binio.hpp"

namespace kinverify::datakit {

using nlohmann::json;
using nlohmann::ordered_json;

std::string relation_name(Relation relation) {
  return relation == Relation::kFmS ? "FM-S" : "FM-D";
}

Relation parse_relation(std::string_view name) {
  if (name == "FM-S") return Relation::kFmS;
  if (name == "FM-D") return Relation::kFmD;
  throw std::invalid_argument("unknown relation type: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<FamilyRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open manifest " + path.string());
  }
  std::vector<FamilyRecord> records;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    json row;
    try {
      row = json::parse(line);
      FamilyRecord rec;
      rec.family_id = row.at("family_id").get<std::string>();
      rec.relation = parse_relation(row.at("relation").get<std::string>());
      rec.father = row.at("father").get<std::string>();
      rec.mother = row.at("mother").get<std::string>();
      rec.child = row.at("child").get<std::string>();
      if (row.contains("fold")) {
        rec.fold = row.at("fold").get<int>();
      }
      if (!seen_ids.insert(rec.family_id).second) {
        throw std::runtime_error("duplicate family_id '" + rec.family_id + "'");
      }
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest " + path.string() + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void save_manifest(const std::filesystem::path& path,
                   const std::vector<FamilyRecord>& records) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write manifest " + path.string());
  }
  for (const FamilyRecord& rec : records) {
    ordered_json row;
    row["family_id"] = rec.family_id;
    row["relation"] = relation_name(rec.relation);
    row["father"] = rec.father;
    row["mother"] = rec.mother;
    row["child"] = rec.child;
    if (rec.fold) {
      row["fold"] = *rec.fold;
    }
    out << row.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Randomness

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t base, std::string_view name) {
  return splitmix64(base ^ fnv1a64(name));
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("Rng::below: n must be positive");
  }
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * scale;
  has_spare_ = true;
  return u * scale;
}

// ---------------------------------------------------------------------------
// Negative generation

namespace {

std::vector<int> derangement(int n, Rng& rng) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) {
    perm[i] = i;
  }
  while (true) {
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[i], perm[j]);
    }
    bool fixed_point = false;
    for (int i = 0; i < n; ++i) {
      if (perm[i] == i) {
        fixed_point = true;
        break;
      }
    }
    if (!fixed_point) {
      return perm;
    }
  }
}

TripleSample make_negative(const std::vector<TripleSample>& families,
                           int parents_of, int child_of) {
  TripleSample neg;
  neg.father = families[parents_of].father;
  neg.mother = families[parents_of].mother;
  neg.child = families[child_of].child;
  neg.label = -1;
  neg.family_id = families[parents_of].family_id + "x" + families[child_of].family_id;
  return neg;
}

}  // namespace

std::vector<TripleSample> generate_negatives(
    const std::vector<TripleSample>& families, std::uint64_t seed) {
  const int n = static_cast<int>(families.size());
  if (n < 2) {
    throw std::invalid_argument(
        "generate_negatives: need at least 2 families, got " + std::to_string(n));
  }
  Rng rng(seed);
  const std::vector<int> perm = derangement(n, rng);
  std::vector<TripleSample> negatives;
  negatives.reserve(families.size());
  for (int i = 0; i < n; ++i) {
    negatives.push_back(make_negative(families, i, perm[i]));
  }
  return negatives;
}

// ---------------------------------------------------------------------------
// Fold plan

FoldPlan FoldPlan::tskinface() {
  FoldPlan plan;
  plan.ranges[Relation::kFmD] = {{{1, 100}, {101, 200}, {201, 300}, {301, 400}, {401, 502}}};
  plan.ranges[Relation::kFmS] = {{{1, 102}, {103, 204}, {205, 306}, {307, 408}, {409, 513}}};
  return plan;
}

std::array<FoldPlan::Range, 5> FoldPlan::even_ranges(int family_count) {
  if (family_count < 5) {
    throw std::invalid_argument("even_ranges: need at least 5 families");
  }
  const int base = family_count / 5;
  std::array<Range, 5> ranges;
  int start = 1;
  for (int i = 0; i < 5; ++i) {
    const int size = (i == 4) ? family_count - 4 * base : base;
    ranges[i] = {start, start + size - 1};
    start += size;
  }
  return ranges;
}

FoldPlan FoldPlan::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open fold plan " + path.string());
  }
  json doc;
  try {
    in >> doc;
    FoldPlan plan;
    for (const auto& [key, value] : doc.items()) {
      const Relation relation = parse_relation(key);
      if (!value.is_array() || value.size() != 5) {
        throw std::runtime_error("fold plan must list exactly 5 ranges per relation");
      }
      std::array<Range, 5> ranges;
      for (int i = 0; i < 5; ++i) {
        ranges[i] = {value[i].at(0).get<int>(), value[i].at(1).get<int>()};
      }
      plan.ranges[relation] = ranges;
    }
    return plan;
  } catch (const json::exception& e) {
    throw std::runtime_error("fold plan " + path.string() + ": " + e.what());
  }
}

void FoldPlan::save(const std::filesystem::path& path) const {
  ordered_json doc;
  for (const auto& [relation, ranges] : ranges) {
    json arr = json::array();
    for (const Range& r : ranges) {
      arr.push_back({r.begin, r.end});
    }
    doc[relation_name(relation)] = arr;
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write fold plan " + path.string());
  }
  out << doc.dump(2) << "\n";
}

std::array<FoldSplit, 5> kfold_split(int family_count,
                                     const std::array<FoldPlan::Range, 5>& ranges) {
  std::vector<int> owner(family_count, -1);
  for (int f = 0; f < 5; ++f) {
    const auto& r = ranges[f];
    if (r.begin < 1 || r.end > family_count || r.begin > r.end) {
      throw std::invalid_argument("fold range [" + std::to_string(r.begin) + "," +
                                  std::to_string(r.end) + "] is out of bounds");
    }
    for (int i = r.begin; i <= r.end; ++i) {
      if (owner[i - 1] != -1) {
        throw std::invalid_argument("fold ranges overlap at family " + std::to_string(i));
      }
      owner[i - 1] = f;
    }
  }
  for (int i = 0; i < family_count; ++i) {
    if (owner[i] == -1) {
      throw std::invalid_argument("fold ranges leave family " + std::to_string(i + 1) +
                                  " unassigned");
    }
  }
  std::array<FoldSplit, 5> splits;
  for (int i = 0; i < family_count; ++i) {
    for (int f = 0; f < 5; ++f) {
      if (owner[i] == f) {
        splits[f].test_indices.push_back(i);
      } else {
        splits[f].train_indices.push_back(i);
      }
    }
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Feature store

namespace {

constexpr char kStoreMagic[4] = {'K', 'I', 'N', 'F'};

}  // namespace

using binio::ByteReader;
using binio::put_f32;
using binio::put_u16;
using binio::put_u32;
using binio::read_file_bytes;
using binio::write_file_bytes;

FeatureStore FeatureStore::load(const std::filesystem::path& path,
                                std::uint16_t expected_version) {
  if (!std::filesystem::exists(path)) {
    return FeatureStore(expected_version);
  }
  const std::string bytes = read_file_bytes(path);
  ByteReader reader(bytes, path.string());
  if (reader.str(4) != std::string(kStoreMagic, 4)) {
    throw std::runtime_error("feature cache " + path.string() + " has a bad magic");
  }
  const std::uint16_t version = reader.u16();
  const std::uint32_t count = reader.u32();
  const std::uint32_t dim = reader.u32();
  if (version != expected_version) {
    // Stale descriptor version: treat every lookup as a miss.
    return FeatureStore(expected_version);
  }
  FeatureStore store(version);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t key_len = reader.u32();
    std::string key = reader.str(key_len);
    Eigen::VectorXf values(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      values(j) = reader.f32();
    }
    store.write(key, values);
  }
  return store;
}

void FeatureStore::save(const std::filesystem::path& path) const {
  std::string bytes;
  bytes.append(kStoreMagic, 4);
  put_u16(bytes, version_);
  put_u32(bytes, static_cast<std::uint32_t>(entries_.size()));
  put_u32(bytes, entries_.empty() ? 0u : static_cast<std::uint32_t>(dim_));
  for (const auto& [key, values] : entries_) {
    put_u32(bytes, static_cast<std::uint32_t>(key.size()));
    bytes.append(key);
    for (Eigen::Index j = 0; j < values.size(); ++j) {
      put_f32(bytes, values(j));
    }
  }
  write_file_bytes(path, bytes);
}

std::optional<Eigen::VectorXf> FeatureStore::read(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    return std::nullopt;
  }
  return it->second;
}

void FeatureStore::write(const std::string& key, const Eigen::VectorXf& values) {
  if (dim_ == -1) {
    dim_ = static_cast<int>(values.size());
  } else if (dim_ != values.size()) {
    throw std::invalid_argument("feature store dim mismatch: expected " +
                                std::to_string(dim_) + ", got " +
                                std::to_string(values.size()));
  }
  entries_[key] = values;
}

bool FeatureStore::contains(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::vector<RelationFamilies> assemble_families(
    const std::vector<FamilyRecord>& records, const FeatureStore& store) {
  const auto fetch = [&](const std::string& key) {
    const auto values = store.read(key);
    if (!values) {
      throw std::runtime_error("no cached features for '" + key +
                               "'; run extract first");
    }
    return values->cast<double>().eval();
  };
  std::map<Relation, std::vector<TripleSample>> groups;
  for (const FamilyRecord& rec : records) {
    TripleSample sample;
    sample.father = fetch(rec.father);
    sample.mother = fetch(rec.mother);
    sample.child = fetch(rec.child);
    sample.label = 1;
    sample.family_id = rec.family_id;
    groups[rec.relation].push_back(std::move(sample));
  }
  std::vector<RelationFamilies> out;
  for (Relation relation : {Relation::kFmS, Relation::kFmD}) {
    auto it = groups.find(relation);
    if (it != groups.end()) {
      out.push_back({relation, std::move(it->second)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::string synth_mode_name(SynthMode mode) {
  switch (mode) {
    case SynthMode::kSbm: return "sbm";
    case SynthMode::kAbm: return "abm";
    case SynthMode::kPatches: return "patches";
    case SynthMode::kResemblance: return "resemblance";
  }
  return "?";
}

SynthMode parse_synth_mode(std::string_view name) {
  if (name == "sbm") return SynthMode::kSbm;
  if (name == "abm") return SynthMode::kAbm;
  if (name == "patches") return SynthMode::kPatches;
  if (name == "resemblance") return SynthMode::kResemblance;
  throw std::invalid_argument("unknown synth mode: " + std::string(name));
}

namespace {

constexpr int kSynthPatchCount = 49;

Eigen::MatrixXd low_rank_matrix(Rng& rng, int rows, int cols, int rank,
                                double frobenius) {
  Eigen::MatrixXd a(rows, rank);
  Eigen::MatrixXd b(cols, rank);
  for (int j = 0; j < rank; ++j) {
    for (int i = 0; i < rows; ++i) a(i, j) = rng.normal();
    for (int i = 0; i < cols; ++i) b(i, j) = rng.normal();
  }
  Eigen::MatrixXd w = a * b.transpose();
  w *= frobenius / w.norm();
  return w;
}

Eigen::VectorXd random_vector(Rng& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) {
    v(i) = rng.normal();
  }
  return v;
}

std::vector<int> sample_distinct(Rng& rng, int universe, int count) {
  std::vector<int> pool(universe);
  for (int i = 0; i < universe; ++i) {
    pool[i] = i;
  }
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(universe - i)));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> picked(pool.begin(), pool.begin() + count);
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

std::vector<TripleSample> SynthData::all() const {
  std::vector<TripleSample> samples = positives;
  samples.insert(samples.end(), negatives.begin(), negatives.end());
  return samples;
}

double planted_score(const SynthData& data, const TripleSample& triple) {
  switch (data.config.mode) {
    case SynthMode::kSbm:
      return triple.father.dot(data.w_father * triple.child) +
             triple.mother.dot(data.w_mother * triple.child);
    case SynthMode::kAbm: {
      Eigen::VectorXd parents(triple.father.size() + triple.mother.size());
      parents << triple.father, triple.mother;
      return parents.dot(data.w_parent * triple.child);
    }
    case SynthMode::kPatches: {
      const Eigen::Index d = triple.father.size();
      Eigen::VectorXd fc(2 * d), mc(2 * d);
      fc << triple.father, triple.child;
      mc << triple.mother, triple.child;
      return data.teacher_father.dot(fc) + data.teacher_mother.dot(mc);
    }
    case SynthMode::kResemblance:
      throw std::invalid_argument(
          "planted_score: resemblance mode has no planted scoring matrix");
  }
  return 0.0;
}

SynthData synth_generate(const SynthConfig& config) {
  if (config.dim < 1) {
    throw std::invalid_argument("synth_generate: dim must be >= 1");
  }
  if (config.n_pos < 2) {
    throw std::invalid_argument("synth_generate: n_pos must be >= 2");
  }
  if (config.mode == SynthMode::kSbm || config.mode == SynthMode::kAbm) {
    if (config.rank < 1 || config.rank > config.dim) {
      throw std::invalid_argument("synth_generate: rank must be in [1, dim]");
    }
  }
  if (config.mode == SynthMode::kPatches &&
      (config.planted_patches < 1 || config.planted_patches > kSynthPatchCount)) {
    throw std::invalid_argument(
        "synth_generate: planted_patches must be in [1, 49]");
  }
  if (!(config.noise_sigma >= 0.0)) {
    throw std::invalid_argument("synth_generate: noise_sigma must be >= 0");
  }
  if (!(config.margin > 0.0)) {
    throw std::invalid_argument("synth_generate: margin must be > 0");
  }
  if (!(config.negative_margin < config.margin)) {
    throw std::invalid_argument(
        "synth_generate: negative_margin must be below margin");
  }

  SynthData data;
  data.config = config;

  Rng model_rng(substream_seed(config.seed, "synth/model"));
  Rng feature_rng(substream_seed(config.seed, "synth/features"));
  Rng noise_rng(substream_seed(config.seed, "synth/noise"));

  const int member_dim = config.mode == SynthMode::kPatches
                             ? kSynthPatchCount * config.dim
                             : config.dim;

  // Plant the ground-truth model.
  switch (config.mode) {
    case SynthMode::kSbm: {
      const double frob = 1.0 / std::sqrt(2.0);
      data.w_father = low_rank_matrix(model_rng, config.dim, config.dim,
                                      config.rank, frob);
      data.w_mother = low_rank_matrix(model_rng, config.dim, config.dim,
                                      config.rank, frob);
      break;
    }
    case SynthMode::kAbm:
      data.w_parent = low_rank_matrix(model_rng, 2 * config.dim, config.dim,
                                      config.rank, 1.0);
      break;
    case SynthMode::kPatches: {
      data.father_patches = sample_distinct(model_rng, kSynthPatchCount,
                                            config.planted_patches);
      data.mother_patches = sample_distinct(model_rng, kSynthPatchCount,
                                            config.planted_patches);
      data.child_patches = sample_distinct(model_rng, kSynthPatchCount,
                                           config.planted_patches);
      data.teacher_father = Eigen::VectorXd::Zero(2 * member_dim);
      data.teacher_mother = Eigen::VectorXd::Zero(2 * member_dim);
      const auto fill = [&](Eigen::VectorXd& teacher, const std::vector<int>& patches,
                            int offset) {
        for (int patch : patches) {
          for (int j = 0; j < config.dim; ++j) {
            teacher(offset + patch * config.dim + j) = model_rng.normal();
          }
        }
      };
      fill(data.teacher_father, data.father_patches, 0);
      fill(data.teacher_father, data.child_patches, member_dim);
      fill(data.teacher_mother, data.mother_patches, 0);
      fill(data.teacher_mother, data.child_patches, member_dim);
      // Scale so the generative score has unit variance on spherical input.
      const double var =
          data.teacher_father.head(member_dim).squaredNorm() +
          data.teacher_mother.head(member_dim).squaredNorm() +
          (data.teacher_father.tail(member_dim) + data.teacher_mother.tail(member_dim))
              .squaredNorm();
      data.teacher_father /= std::sqrt(var);
      data.teacher_mother /= std::sqrt(var);
      break;
    }
    case SynthMode::kResemblance:
      break;
  }

  const auto score = [&](const TripleSample& t) { return planted_score(data, t); };

  if (config.mode == SynthMode::kPatches) {
    // The selection oracle: a linear teacher supported on the planted
    // patches labels each drawn triple by its signed margin. Deranged
    // negatives would share the positives' feature marginals exactly and
    // carry no linearly recoverable signal, so this mode samples its
    // negatives below the negative margin instead.
    data.positives.reserve(config.n_pos);
    data.negatives.reserve(config.n_pos);
    char id[16];
    while (static_cast<int>(data.positives.size()) < config.n_pos ||
           static_cast<int>(data.negatives.size()) < config.n_pos) {
      TripleSample t;
      t.father = random_vector(feature_rng, member_dim);
      t.mother = random_vector(feature_rng, member_dim);
      t.child = random_vector(feature_rng, member_dim);
      const double s = score(t);
      if (s >= config.margin &&
          static_cast<int>(data.positives.size()) < config.n_pos) {
        t.label = 1;
        std::snprintf(id, sizeof(id), "fam%05zu", data.positives.size());
        t.family_id = id;
        data.positives.push_back(std::move(t));
      } else if (s <= -config.margin &&
                 static_cast<int>(data.negatives.size()) < config.n_pos) {
        t.label = -1;
        std::snprintf(id, sizeof(id), "neg%05zu", data.negatives.size());
        t.family_id = id;
        data.negatives.push_back(std::move(t));
      }
    }
    if (config.noise_sigma > 0.0) {
      for (auto* list : {&data.positives, &data.negatives}) {
        for (TripleSample& t : *list) {
          t.father += config.noise_sigma * random_vector(noise_rng, member_dim);
          t.mother += config.noise_sigma * random_vector(noise_rng, member_dim);
          t.child += config.noise_sigma * random_vector(noise_rng, member_dim);
        }
      }
    }
    return data;
  }

  const bool has_teacher = config.mode != SynthMode::kResemblance;

  // Draw positive families.
  const auto draw_family = [&](int index) {
    TripleSample fam;
    fam.label = 1;
    char id[16];
    std::snprintf(id, sizeof(id), "fam%05d", index);
    fam.family_id = id;
    if (config.mode == SynthMode::kResemblance) {
      fam.father = random_vector(feature_rng, member_dim);
      fam.mother = random_vector(feature_rng, member_dim);
      const int dominant = static_cast<int>(feature_rng.below(2));
      const Eigen::VectorXd& strong = dominant == 0 ? fam.father : fam.mother;
      const Eigen::VectorXd& weak = dominant == 0 ? fam.mother : fam.father;
      fam.child = config.resemblance_high * strong + config.resemblance_low * weak +
                  config.noise_sigma * random_vector(feature_rng, member_dim);
      data.dominant_parent.push_back(dominant);
      return fam;
    }
    // A positive child carries a heritable low-rank component of its
    // parents besides its own spherical draw; the margin filter then
    // guarantees separation from the deranged negatives.
    do {
      fam.father = random_vector(feature_rng, member_dim);
      fam.mother = random_vector(feature_rng, member_dim);
      Eigen::VectorXd heritable;
      if (config.mode == SynthMode::kSbm) {
        heritable = data.w_father.transpose() * fam.father +
                    data.w_mother.transpose() * fam.mother;
      } else {
        Eigen::VectorXd parents(2 * member_dim);
        parents << fam.father, fam.mother;
        heritable = data.w_parent.transpose() * parents;
      }
      fam.child = random_vector(feature_rng, member_dim) +
                  config.signal_strength * heritable;
    } while (score(fam) < config.margin);
    return fam;
  };

  data.positives.reserve(config.n_pos);
  for (int i = 0; i < config.n_pos; ++i) {
    data.positives.push_back(draw_family(i));
  }

  // Seeded derangement of children across families.
  Rng negative_rng(substream_seed(config.seed, "synth/negatives"));
  std::vector<int> perm;
  {
    std::vector<int> identity(config.n_pos);
    for (int i = 0; i < config.n_pos; ++i) identity[i] = i;
    perm = identity;
    // reuse the shared derangement routine shape: shuffle until fixed-point free
    Rng& rng = negative_rng;
    while (true) {
      for (int i = config.n_pos - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(perm[i], perm[j]);
      }
      bool fixed_point = false;
      for (int i = 0; i < config.n_pos; ++i) {
        if (perm[i] == i) {
          fixed_point = true;
          break;
        }
      }
      if (!fixed_point) break;
    }
  }

  if (has_teacher) {
    // Keep every deranged combination strictly below negative_margin so
    // a noiseless dataset is separable by the planted model with a score
    // gap. Only the child of family j feeds the single deranged edge
    // into j, so redrawing that child (subject to its own family staying
    // above the positive margin) resolves a violation without touching
    // any other pairing; one sweep suffices.
    const auto heritable_of = [&](const TripleSample& fam) {
      if (config.mode == SynthMode::kSbm) {
        return (data.w_father.transpose() * fam.father +
                data.w_mother.transpose() * fam.mother)
            .eval();
      }
      Eigen::VectorXd parents(2 * member_dim);
      parents << fam.father, fam.mother;
      return (data.w_parent.transpose() * parents).eval();
    };
    for (int i = 0; i < config.n_pos; ++i) {
      const int j = perm[i];
      TripleSample probe;
      probe.father = data.positives[i].father;
      probe.mother = data.positives[i].mother;
      probe.child = data.positives[j].child;
      if (score(probe) < config.negative_margin) {
        continue;
      }
      TripleSample& fam = data.positives[j];
      const Eigen::VectorXd heritable = heritable_of(fam);
      do {
        fam.child = random_vector(feature_rng, member_dim) +
                    config.signal_strength * heritable;
        probe.child = fam.child;
      } while (score(fam) < config.margin ||
               score(probe) >= config.negative_margin);
    }
    // Observation noise on the family features, after separability is fixed.
    if (config.noise_sigma > 0.0) {
      for (TripleSample& fam : data.positives) {
        fam.father += config.noise_sigma * random_vector(noise_rng, member_dim);
        fam.mother += config.noise_sigma * random_vector(noise_rng, member_dim);
        fam.child += config.noise_sigma * random_vector(noise_rng, member_dim);
      }
    }
  }

  data.negatives.reserve(config.n_pos);
  for (int i = 0; i < config.n_pos; ++i) {
    data.negatives.push_back(make_negative(data.positives, i, perm[i]));
  }
  return data;
}

}  // namespace kinverify::datakit
