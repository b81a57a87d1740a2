// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

// Command-line front end: extract features, train and evaluate the
// verification models, predict on new faces, generate synthetic data.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kinverify/datakit.hpp"
#include "kinverify/evalkit.hpp"
#include "kinverify/facefeat.hpp"
#include "kinverify/kinmodels.hpp"
#include "kinverify/select.hpp"
#include "kinverify/types.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace kinverify;

namespace {

struct CommonOptions {
  std::string manifest;
  std::string cache;
  std::string model_kind = "sbm";
  bool block_level = false;
  bool feature_selection = false;
  int k = 25;
  double lambda = 5.0;
  double gamma = 0.08;
  double alpha = 0.1;
  int iterations = 5;
  std::uint64_t seed = 0;
  std::string form;
  int solver_iterations = 500;
  double solver_tolerance = 1e-7;

  CLI::Option* lambda_option = nullptr;
};

std::string check_alpha(const std::string& text) {
  try {
    const double v = std::stod(text);
    if (v > 0.0 && v < 1.0) {
      return {};
    }
  } catch (const std::exception&) {
  }
  return "alpha must be in (0, 1)";
}

void add_model_options(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--model", opts.model_kind, "Model kind")
      ->check(CLI::IsMember({"sbm", "abm", "rsbm", "concat-baseline"}))
      ->capture_default_str();
  cmd->add_flag("--block-level", opts.block_level,
                "Fit one model per selected patch and fuse their probabilities");
  cmd->add_flag("--feature-selection", opts.feature_selection,
                "Select top-K patches per role by spatially voted L1 weights");
  cmd->add_option("--k", opts.k, "Patches kept per role by feature selection")
      ->check(CLI::Range(1, 49))
      ->capture_default_str();
  opts.lambda_option =
      cmd->add_option("--lambda", opts.lambda,
                      "Trace-norm strength (default 5.0; 0.1 at block level)");
  cmd->add_option("--gamma", opts.gamma, "L1 strength of the selection fits")
      ->capture_default_str();
  cmd->add_option("--alpha", opts.alpha, "Prior stabilization trade-off")
      ->check(check_alpha)
      ->capture_default_str();
  cmd->add_option("--iterations", opts.iterations, "RSBM training rounds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", opts.seed, "Root seed of all randomized steps")
      ->capture_default_str();
  cmd->add_option("--form", opts.form,
                  "Tri-subject form (FM-S, FM-D, FS-M, MS-F, FD-M, MD-F)")
      ->check(CLI::IsMember({"FM-S", "FM-D", "FS-M", "MS-F", "FD-M", "MD-F"}));
  cmd->add_option("--solver-iterations", opts.solver_iterations,
                  "Inner solver iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--solver-tolerance", opts.solver_tolerance,
                  "Inner solver relative objective tolerance")
      ->capture_default_str();
}

void add_data_options(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--manifest", opts.manifest, "JSON-lines family manifest")
      ->required();
  cmd->add_option("--cache", opts.cache, "Feature cache file")
      ->envname("KINVERIFY_CACHE")
      ->required();
}

evalkit::ProtocolConfig protocol_config(const CommonOptions& opts, int jobs = 1) {
  evalkit::ProtocolConfig cfg;
  cfg.kind = kinmodels::parse_model_kind(opts.model_kind);
  cfg.block_level = opts.block_level;
  cfg.feature_selection = opts.feature_selection;
  cfg.k = opts.k;
  cfg.lambda = opts.lambda;
  if (opts.lambda_option != nullptr && opts.lambda_option->count() == 0) {
    cfg.lambda = opts.block_level ? 0.1 : 5.0;
  }
  cfg.gamma = opts.gamma;
  cfg.alpha = opts.alpha;
  cfg.rsbm_iterations = opts.iterations;
  cfg.seed = opts.seed;
  cfg.solver.max_iterations = opts.solver_iterations;
  cfg.solver.tolerance = opts.solver_tolerance;
  cfg.jobs = jobs;
  if (!opts.form.empty()) {
    cfg.form = kinmodels::parse_relation_form(opts.form);
  }
  return cfg;
}

ordered_json config_json(const evalkit::ProtocolConfig& cfg) {
  ordered_json doc;
  doc["kind"] = kinmodels::model_kind_name(cfg.kind);
  doc["block_level"] = cfg.block_level;
  doc["feature_selection"] = cfg.feature_selection;
  doc["k"] = cfg.k;
  doc["lambda"] = cfg.lambda;
  doc["gamma"] = cfg.gamma;
  doc["alpha"] = cfg.alpha;
  doc["iterations"] = cfg.rsbm_iterations;
  doc["seed"] = cfg.seed;
  if (cfg.form) {
    doc["form"] = kinmodels::relation_form_name(*cfg.form);
  }
  return doc;
}

Eigen::VectorXd image_features(const std::string& path) {
  const facefeat::FaceImage image = facefeat::load_pgm(path);
  const facefeat::PatchGrid grid = facefeat::extract_patch_grid(image);
  // round through the cache precision so file and cache inputs agree
  return facefeat::face_feature(grid).values.cast<float>().cast<double>();
}

datakit::Relation form_source_relation(kinmodels::RelationForm form) {
  switch (form) {
    case kinmodels::RelationForm::kFmS:
    case kinmodels::RelationForm::kFsM:
    case kinmodels::RelationForm::kMsF:
      return datakit::Relation::kFmS;
    default:
      return datakit::Relation::kFmD;
  }
}

// Training pool for one form: that form's families, permuted, plus seeded
// negatives.
std::vector<TripleSample> training_pool(const CommonOptions& opts,
                                        const evalkit::ProtocolConfig& cfg) {
  const auto records = datakit::load_manifest(opts.manifest);
  const auto store = datakit::FeatureStore::load(opts.cache);
  const auto data = datakit::assemble_families(records, store);

  const kinmodels::RelationForm form =
      cfg.form.value_or(kinmodels::RelationForm::kFmS);
  const datakit::Relation relation = form_source_relation(form);
  for (const datakit::RelationFamilies& group : data) {
    if (group.relation != relation) {
      continue;
    }
    std::vector<TripleSample> pool = kinmodels::permute_roles(group.families, form);
    std::vector<TripleSample> negatives = datakit::generate_negatives(
        pool, datakit::substream_seed(cfg.seed, "neg/train/" +
                                                    kinmodels::relation_form_name(form)));
    pool.insert(pool.end(), std::make_move_iterator(negatives.begin()),
                std::make_move_iterator(negatives.end()));
    return pool;
  }
  throw std::runtime_error("manifest has no families of relation " +
                           datakit::relation_name(relation));
}

// ---------------------------------------------------------------------------

int cmd_extract(const CommonOptions& opts, bool force) {
  const auto records = datakit::load_manifest(opts.manifest);
  auto store = datakit::FeatureStore::load(opts.cache);
  std::size_t computed = 0;
  for (const datakit::FamilyRecord& rec : records) {
    for (const std::string& path : {rec.father, rec.mother, rec.child}) {
      if (!force && store.contains(path)) {
        continue;
      }
      const facefeat::FaceImage image = facefeat::load_pgm(path);
      const facefeat::PatchGrid grid = facefeat::extract_patch_grid(image);
      store.write(path, facefeat::face_feature(grid).values.cast<float>());
      ++computed;
    }
  }
  if (computed > 0) {
    store.save(opts.cache);
  }
  std::cout << "extracted " << computed << " new feature records ("
            << store.size() << " cached)\n";
  return 0;
}

int cmd_train(const CommonOptions& opts, const std::string& output) {
  const evalkit::ProtocolConfig cfg = protocol_config(opts);
  const std::vector<TripleSample> train = training_pool(opts, cfg);
  const kinmodels::ModelPackage package = evalkit::fit_for_config(cfg, train);

  kinmodels::save_model(output, package);
  ordered_json sidecar = config_json(cfg);
  sidecar["training_samples"] = train.size();
  std::ofstream(output + ".json") << sidecar.dump(2) << "\n";
  if (package.selection) {
    std::ofstream(output + ".selection.json") << package.selection->to_json() << "\n";
    if (!package.selection->degenerate_roles.empty()) {
      std::cerr << "warning: degenerate all-zero votes for role(s):";
      for (const std::string& role : package.selection->degenerate_roles) {
        std::cerr << " " << role;
      }
      std::cerr << "; kept the lowest-index patches\n";
    }
  }
  std::cout << "trained " << cfg.method_name() << " on " << train.size()
            << " samples -> " << output << "\n";
  return 0;
}

int cmd_eval(const CommonOptions& opts, const std::string& output,
             const std::string& plan_path, const std::string& roc_path, int jobs) {
  const evalkit::ProtocolConfig cfg = protocol_config(opts, jobs);
  const auto records = datakit::load_manifest(opts.manifest);
  const auto store = datakit::FeatureStore::load(opts.cache);
  const auto data = datakit::assemble_families(records, store);

  datakit::FoldPlan plan;
  if (!plan_path.empty()) {
    plan = datakit::FoldPlan::load(plan_path);
  } else {
    for (const datakit::RelationFamilies& group : data) {
      plan.ranges[group.relation] =
          datakit::FoldPlan::even_ranges(static_cast<int>(group.families.size()));
    }
  }

  const evalkit::ProtocolReport report = evalkit::run_protocol(cfg, data, plan);

  std::ofstream(output + ".json") << report.to_json() << "\n";
  std::ofstream(output + ".txt") << report.to_text();
  if (!roc_path.empty()) {
    const fs::path base(roc_path);
    for (const evalkit::RelationReport& rel : report.relations) {
      fs::path path = base;
      if (report.relations.size() > 1) {
        path = base.parent_path() /
               (base.stem().string() + "-" + rel.label + base.extension().string());
      }
      evalkit::write_roc_csv(path, rel.pooled_roc);
    }
  }
  std::cout << report.to_text();
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& mode,
                const std::string& father, const std::string& mother,
                const std::string& child, const std::string& cache) {
  const kinmodels::ModelPackage package = kinmodels::load_model(model_path);

  std::optional<datakit::FeatureStore> store;
  if (!cache.empty()) {
    store = datakit::FeatureStore::load(cache);
  }
  const auto features = [&](const std::string& ref,
                            const char* role) -> Eigen::VectorXd {
    if (ref.empty()) {
      throw std::runtime_error(std::string("mode ") + mode + " needs --" + role);
    }
    if (store) {
      const auto cached = store->read(ref);
      if (!cached) {
        throw std::runtime_error("no cached features for '" + ref + "'");
      }
      return cached->cast<double>();
    }
    return image_features(ref);
  };

  double probability = 0.0;
  if (mode == "triple") {
    TripleSample sample;
    sample.father = features(father, "father");
    sample.mother = features(mother, "mother");
    sample.child = features(child, "child");
    probability = evalkit::predict_for_package(package, sample);
  } else {
    const bool father_side = mode == "pair:father";
    const Eigen::VectorXd parent =
        father_side ? features(father, "father") : features(mother, "mother");
    Eigen::VectorXd query = features(child, "child");
    Eigen::VectorXd parent_in = parent;
    if (package.selection) {
      const select::GroupMap gmap = select::GroupMap::for_dimension(parent.size());
      TripleSample full;
      full.father = father_side ? parent : Eigen::VectorXd::Zero(parent.size());
      full.mother = father_side ? Eigen::VectorXd::Zero(parent.size()) : parent;
      full.child = query;
      const TripleSample sliced =
          select::apply_selection(full, *package.selection, gmap);
      parent_in = father_side ? sliced.father : sliced.mother;
      query = sliced.child;
    }
    const kinmodels::ParentRole role = father_side ? kinmodels::ParentRole::kFather
                                                   : kinmodels::ParentRole::kMother;
    if (const auto* sbm = std::get_if<kinmodels::SBMModel>(&package.model)) {
      probability = kinmodels::predict_pair(*sbm, parent_in, query, role);
    } else if (const auto* rsbm = std::get_if<kinmodels::RSBMModel>(&package.model)) {
      probability = kinmodels::predict_pair(*rsbm, parent_in, query, role);
    } else {
      throw std::runtime_error("pair mode needs an image-level sbm or rsbm model");
    }
  }

  ordered_json out;
  out["probability"] = probability;
  out["decision"] = probability >= 0.5;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_synth(const datakit::SynthConfig& cfg, const std::string& output_dir) {
  const datakit::SynthData data = datakit::synth_generate(cfg);
  fs::create_directories(output_dir);

  std::vector<datakit::FamilyRecord> records;
  datakit::FeatureStore store;
  for (std::size_t i = 0; i < data.positives.size(); ++i) {
    const TripleSample& fam = data.positives[i];
    datakit::FamilyRecord rec;
    rec.family_id = fam.family_id;
    rec.relation = i % 2 == 0 ? datakit::Relation::kFmS : datakit::Relation::kFmD;
    rec.father = "synth/" + fam.family_id + "/f";
    rec.mother = "synth/" + fam.family_id + "/m";
    rec.child = "synth/" + fam.family_id + "/c";
    store.write(rec.father, fam.father.cast<float>());
    store.write(rec.mother, fam.mother.cast<float>());
    store.write(rec.child, fam.child.cast<float>());
    records.push_back(std::move(rec));
  }
  const fs::path dir(output_dir);
  datakit::save_manifest(dir / "manifest.jsonl", records);
  store.save(dir / "features.kinf");

  ordered_json truth;
  truth["mode"] = datakit::synth_mode_name(cfg.mode);
  truth["dim"] = cfg.dim;
  truth["n_pos"] = cfg.n_pos;
  truth["rank"] = cfg.rank;
  truth["noise_sigma"] = cfg.noise_sigma;
  truth["seed"] = cfg.seed;
  truth["margin"] = cfg.margin;
  const auto matrix_json = [](const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      ordered_json row = ordered_json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        row.push_back(m(i, j));
      }
      rows.push_back(std::move(row));
    }
    return rows;
  };
  switch (cfg.mode) {
    case datakit::SynthMode::kSbm:
      truth["w_father"] = matrix_json(data.w_father);
      truth["w_mother"] = matrix_json(data.w_mother);
      break;
    case datakit::SynthMode::kAbm:
      truth["w_parent"] = matrix_json(data.w_parent);
      break;
    case datakit::SynthMode::kPatches:
      truth["father_patches"] = data.father_patches;
      truth["mother_patches"] = data.mother_patches;
      truth["child_patches"] = data.child_patches;
      break;
    case datakit::SynthMode::kResemblance:
      truth["dominant_parent"] = data.dominant_parent;
      break;
  }
  std::ofstream(dir / "truth.json") << truth.dump(2) << "\n";

  std::cout << "wrote " << records.size() << " synthetic families to "
            << output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tri-subject (child vs both parents) kinship verification"};
  app.require_subcommand(1);

  CommonOptions opts;

  // extract
  auto* extract = app.add_subcommand("extract", "Compute and cache face features");
  add_data_options(extract, opts);
  bool force = false;
  extract->add_flag("--force", force, "Recompute even when cached");

  // train
  auto* train = app.add_subcommand("train", "Fit one model on all listed families");
  add_data_options(train, opts);
  add_model_options(train, opts);
  std::string train_output;
  train->add_option("--output", train_output, "Model file to write")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Run the five-fold protocol");
  add_data_options(eval, opts);
  add_model_options(eval, opts);
  std::string eval_output = "report";
  std::string plan_path;
  std::string roc_path;
  int jobs = 1;
  eval->add_option("--output", eval_output, "Report base path (.json/.txt added)")
      ->capture_default_str();
  eval->add_option("--fold-plan", plan_path,
                   "JSON fold plan; defaults to near-equal fifths");
  eval->add_option("--roc", roc_path, "Write pooled ROC points (fpr,tpr CSV)");
  eval->add_option("--jobs", jobs, "Folds evaluated in parallel")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // predict
  auto* predict = app.add_subcommand("predict", "Score new faces with a trained model");
  std::string model_path, mode = "triple", father, mother, child, predict_cache;
  predict->add_option("--model", model_path, "Trained model file")->required();
  predict->add_option("--mode", mode, "triple, pair:father or pair:mother")
      ->check(CLI::IsMember({"triple", "pair:father", "pair:mother"}))
      ->capture_default_str();
  predict->add_option("--father", father, "Father image (PGM) or cache key");
  predict->add_option("--mother", mother, "Mother image (PGM) or cache key");
  predict->add_option("--child", child, "Child image (PGM) or cache key");
  predict->add_option("--cache", predict_cache,
                      "Treat inputs as keys into this feature cache")
      ->envname("KINVERIFY_CACHE");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate planted-model synthetic data");
  datakit::SynthConfig synth_cfg;
  std::string synth_mode = "sbm";
  std::string synth_dir;
  synth->add_option("--output-dir", synth_dir, "Directory for manifest/cache/truth")
      ->required();
  synth->add_option("--mode", synth_mode, "sbm, abm, patches or resemblance")
      ->check(CLI::IsMember({"sbm", "abm", "patches", "resemblance"}))
      ->capture_default_str();
  synth->add_option("--d", synth_cfg.dim, "Feature dim (per patch in patches mode)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--n-pos", synth_cfg.n_pos, "Number of positive families")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--rank", synth_cfg.rank, "Rank of the planted matrices")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise_sigma, "Observation noise sigma")
      ->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "Generator seed")->capture_default_str();
  synth->add_option("--margin", synth_cfg.margin, "Positive score margin")
      ->capture_default_str();
  synth->add_option("--planted-patches", synth_cfg.planted_patches,
                    "Informative patches per role (patches mode)")
      ->check(CLI::Range(1, 49))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (extract->parsed()) {
      return cmd_extract(opts, force);
    }
    if (train->parsed()) {
      return cmd_train(opts, train_output);
    }
    if (eval->parsed()) {
      return cmd_eval(opts, eval_output, plan_path, roc_path, jobs);
    }
    if (predict->parsed()) {
      return cmd_predict(model_path, mode, father, mother, child, predict_cache);
    }
    if (synth->parsed()) {
      synth_cfg.mode = datakit::parse_synth_mode(synth_mode);
      return cmd_synth(synth_cfg, synth_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
