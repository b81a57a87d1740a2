// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#include "kinverify/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace kinverify::evalkit {

using nlohmann::ordered_json;

double accuracy(const std::vector<int>& decisions, const std::vector<int>& labels) {
  if (decisions.size() != labels.size() || decisions.empty()) {
    throw std::invalid_argument("accuracy: decision and label lists must match");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i] == labels[i]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(decisions.size());
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("roc_auc: score and label lists must match");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int label : labels) {
    if (label == 1) {
      ++n_pos;
    } else if (label == -1) {
      ++n_neg;
    } else {
      throw std::invalid_argument("roc_auc: labels must be +1 or -1");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("roc_auc: both classes must be present");
  }

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  double auc = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    // advance over one group of tied scores
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == 1 ? 1 : 0;
      fp += labels[order[j]] == -1 ? 1 : 0;
      ++j;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    curve.points.emplace_back(fpr, tpr);
    prev_fpr = fpr;
    prev_tpr = tpr;
    i = j;
  }
  curve.auc = auc;
  return curve;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write ROC file " + path.string());
  }
  out << "fpr,tpr\n";
  char line[80];
  for (const auto& [fpr, tpr] : curve.points) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g\n", fpr, tpr);
    out << line;
  }
}

void FitAudit::note(const std::string& context,
                    const std::vector<TripleSample>& samples) {
  const std::lock_guard<std::mutex> lock(mutex);
  auto& ids = family_ids_by_context[context];
  for (const TripleSample& s : samples) {
    ids.insert(s.family_id);
  }
}

std::string ProtocolConfig::method_name() const {
  std::string name = kinmodels::model_kind_name(kind);
  if (block_level) {
    name += "-block";
  }
  if (feature_selection) {
    name += "-fs";
  }
  return name;
}

namespace {

datakit::Relation source_relation(kinmodels::RelationForm form) {
  switch (form) {
    case kinmodels::RelationForm::kFmS:
    case kinmodels::RelationForm::kFsM:
    case kinmodels::RelationForm::kMsF:
      return datakit::Relation::kFmS;
    default:
      return datakit::Relation::kFmD;
  }
}

void validate_config(const ProtocolConfig& config) {
  if (config.k < 1 || config.k > 49) {
    throw std::invalid_argument("protocol: K must be in [1, 49]");
  }
  if (!(config.lambda > 0.0)) {
    throw std::invalid_argument("protocol: lambda must be > 0");
  }
  if (!(config.gamma > 0.0)) {
    throw std::invalid_argument("protocol: gamma must be > 0");
  }
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw std::invalid_argument("protocol: alpha must be in (0, 1)");
  }
  if (config.rsbm_iterations < 1) {
    throw std::invalid_argument("protocol: iteration count must be >= 1");
  }
  if (config.jobs < 1) {
    throw std::invalid_argument("protocol: jobs must be >= 1");
  }
  if (config.block_level && config.kind == kinmodels::ModelKind::kConcatBaseline) {
    throw std::invalid_argument("protocol: the concat baseline has no block variant");
  }
}

struct FoldScores {
  std::vector<double> scores;
  std::vector<int> labels;
};

}  // namespace

kinmodels::ModelPackage fit_for_config(const ProtocolConfig& config,
                                       const std::vector<TripleSample>& train,
                                       FitAudit* audit,
                                       const std::string& audit_context) {
  if (audit != nullptr) {
    audit->note(audit_context, train);
  }
  kinmodels::ModelPackage package{kinmodels::AnyModel{kinmodels::SBMModel{}},
                                  std::nullopt};
  std::vector<TripleSample> fit_input = train;
  if (config.feature_selection) {
    package.selection =
        select::fit_selection(train, config.gamma, config.k, config.solver);
  } else if (config.block_level) {
    package.selection = select::PatchSelection::all_patches(49);
  }

  if (config.block_level) {
    package.model = kinmodels::fit_block_ensemble(
        config.kind, train, *package.selection, config.lambda, config.alpha,
        config.rsbm_iterations, config.solver);
    return package;
  }

  if (package.selection) {
    const select::GroupMap gmap =
        select::GroupMap::for_dimension(train.front().father.size());
    fit_input = select::apply_selection(train, *package.selection, gmap);
  }
  switch (config.kind) {
    case kinmodels::ModelKind::kSbm:
      package.model = kinmodels::fit_sbm(fit_input, config.lambda, config.solver);
      break;
    case kinmodels::ModelKind::kAbm:
      package.model = kinmodels::fit_abm(fit_input, config.lambda, config.solver);
      break;
    case kinmodels::ModelKind::kRsbm:
      package.model =
          kinmodels::fit_rsbm(fit_input, config.lambda, config.alpha,
                              config.rsbm_iterations, config.solver);
      break;
    case kinmodels::ModelKind::kConcatBaseline:
      package.model = kinmodels::fit_concat_baseline(fit_input, config.solver);
      break;
  }
  return package;
}

double predict_for_package(const kinmodels::ModelPackage& package,
                           const TripleSample& sample) {
  // Block ensembles slice their own patches from full features.
  if (std::holds_alternative<kinmodels::BlockEnsemble>(package.model)) {
    return kinmodels::predict_any(package.model, sample.father, sample.mother,
                                  sample.child);
  }
  if (package.selection) {
    const select::GroupMap gmap =
        select::GroupMap::for_dimension(sample.father.size());
    const TripleSample sliced =
        select::apply_selection(sample, *package.selection, gmap);
    return kinmodels::predict_any(package.model, sliced.father, sliced.mother,
                                  sliced.child);
  }
  return kinmodels::predict_any(package.model, sample.father, sample.mother,
                                sample.child);
}

ProtocolReport run_protocol(const ProtocolConfig& config,
                            const std::vector<datakit::RelationFamilies>& data,
                            const datakit::FoldPlan& plan,
                            FitAudit* audit) {
  validate_config(config);

  struct Task {
    std::string label;
    std::vector<TripleSample> families;
    std::array<datakit::FoldSplit, 5> splits;
  };
  std::vector<Task> tasks;
  for (const datakit::RelationFamilies& group : data) {
    if (config.form && source_relation(*config.form) != group.relation) {
      continue;
    }
    Task task;
    task.label = config.form ? kinmodels::relation_form_name(*config.form)
                             : datakit::relation_name(group.relation);
    task.families = config.form
                        ? kinmodels::permute_roles(group.families, *config.form)
                        : group.families;
    const auto it = plan.ranges.find(group.relation);
    if (it == plan.ranges.end()) {
      throw std::invalid_argument("fold plan has no ranges for relation " +
                                  datakit::relation_name(group.relation));
    }
    task.splits =
        datakit::kfold_split(static_cast<int>(task.families.size()), it->second);
    tasks.push_back(std::move(task));
  }
  if (tasks.empty()) {
    throw std::invalid_argument("protocol: no families match the configuration");
  }

  std::vector<std::array<FoldResult, 5>> fold_results(tasks.size());
  std::vector<std::array<FoldScores, 5>> fold_scores(tasks.size());

  const auto run_fold = [&](std::size_t task_index, int fold) {
    const Task& task = tasks[task_index];
    const datakit::FoldSplit& split = task.splits[fold];
    const auto gather = [&](const std::vector<int>& indices) {
      std::vector<TripleSample> out;
      out.reserve(indices.size());
      for (int idx : indices) {
        out.push_back(task.families[idx]);
      }
      return out;
    };
    std::vector<TripleSample> train = gather(split.train_indices);
    std::vector<TripleSample> test = gather(split.test_indices);
    const std::string fold_tag = task.label + "/fold" + std::to_string(fold + 1);
    {
      // Negative pairings are drawn independently on each side so no test
      // identity can enter a training negative.
      std::vector<TripleSample> train_neg = datakit::generate_negatives(
          train, datakit::substream_seed(config.seed, "neg/train/" + fold_tag));
      std::vector<TripleSample> test_neg = datakit::generate_negatives(
          test, datakit::substream_seed(config.seed, "neg/test/" + fold_tag));
      train.insert(train.end(), std::make_move_iterator(train_neg.begin()),
                   std::make_move_iterator(train_neg.end()));
      test.insert(test.end(), std::make_move_iterator(test_neg.begin()),
                  std::make_move_iterator(test_neg.end()));
    }

    const kinmodels::ModelPackage package =
        fit_for_config(config, train, audit, fold_tag);

    FoldScores scored;
    scored.scores.reserve(test.size());
    scored.labels.reserve(test.size());
    std::vector<int> decisions;
    decisions.reserve(test.size());
    for (const TripleSample& sample : test) {
      const double p = predict_for_package(package, sample);
      scored.scores.push_back(p);
      scored.labels.push_back(sample.label);
      decisions.push_back(p >= 0.5 ? 1 : -1);
    }

    FoldResult result;
    result.fold = fold + 1;
    result.accuracy = accuracy(decisions, scored.labels);
    const RocCurve curve = roc_auc(scored.scores, scored.labels);
    result.auc = curve.auc;
    result.roc_points = curve.points;
    fold_results[task_index][fold] = std::move(result);
    fold_scores[task_index][fold] = std::move(scored);
  };

  std::vector<std::pair<std::size_t, int>> work;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (int f = 0; f < 5; ++f) {
      work.emplace_back(t, f);
    }
  }
  if (config.jobs <= 1) {
    for (const auto& [t, f] : work) {
      run_fold(t, f);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    const int worker_count =
        std::min<int>(config.jobs, static_cast<int>(work.size()));
    for (int w = 0; w < worker_count; ++w) {
      workers.emplace_back([&]() {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= work.size()) {
            return;
          }
          try {
            run_fold(work[i].first, work[i].second);
          } catch (...) {
            const std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) {
              error = std::current_exception();
            }
          }
        }
      });
    }
    for (std::thread& worker : workers) {
      worker.join();
    }
    if (error) {
      std::rethrow_exception(error);
    }
  }

  ProtocolReport report;
  report.method = config.method_name();
  report.seed = config.seed;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    RelationReport rel;
    rel.label = tasks[t].label;
    rel.folds = std::move(fold_results[t]);
    double mean_acc = 0.0, mean_auc = 0.0;
    for (const FoldResult& fr : rel.folds) {
      mean_acc += fr.accuracy;
      mean_auc += fr.auc;
    }
    mean_acc /= 5.0;
    mean_auc /= 5.0;
    double var = 0.0;
    for (const FoldResult& fr : rel.folds) {
      var += (fr.accuracy - mean_acc) * (fr.accuracy - mean_acc);
    }
    rel.mean_accuracy = mean_acc;
    rel.std_accuracy = std::sqrt(var / 5.0);
    rel.mean_auc = mean_auc;

    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;
    for (const FoldScores& fs : fold_scores[t]) {
      pooled_scores.insert(pooled_scores.end(), fs.scores.begin(), fs.scores.end());
      pooled_labels.insert(pooled_labels.end(), fs.labels.begin(), fs.labels.end());
    }
    rel.pooled_roc = roc_auc(pooled_scores, pooled_labels);
    report.relations.push_back(std::move(rel));
  }
  return report;
}

std::string ProtocolReport::to_json() const {
  ordered_json doc;
  doc["method"] = method;
  doc["seed"] = seed;
  ordered_json rels = ordered_json::array();
  for (const RelationReport& rel : relations) {
    ordered_json folds = ordered_json::array();
    for (const FoldResult& fr : rel.folds) {
      folds.push_back({{"fold", fr.fold}, {"accuracy", fr.accuracy}, {"auc", fr.auc}});
    }
    rels.push_back({{"label", rel.label},
                    {"folds", folds},
                    {"mean_accuracy", rel.mean_accuracy},
                    {"std_accuracy", rel.std_accuracy},
                    {"mean_auc", rel.mean_auc}});
  }
  doc["relations"] = rels;
  return doc.dump(2);
}

std::string ProtocolReport::to_text() const {
  char buf[128];
  std::string out = "Method";
  out.append(out.size() < 24 ? 24 - out.size() : 1, ' ');
  for (const RelationReport& rel : relations) {
    std::snprintf(buf, sizeof(buf), "%-18s", rel.label.c_str());
    out += buf;
  }
  out += "avg.\n";

  std::snprintf(buf, sizeof(buf), "%-24s", method.c_str());
  out += buf;
  double avg = 0.0;
  for (const RelationReport& rel : relations) {
    std::snprintf(buf, sizeof(buf), "%5.1f+-%-11.4f", 100.0 * rel.mean_accuracy,
                  100.0 * rel.std_accuracy);
    out += buf;
    avg += rel.mean_accuracy;
  }
  std::snprintf(buf, sizeof(buf), "%5.1f\n", 100.0 * avg / relations.size());
  out += buf;
  return out;
}

}  // namespace kinverify::evalkit
