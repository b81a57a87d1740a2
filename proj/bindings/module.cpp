// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kinverify/datakit.hpp"
#include "kinverify/evalkit.hpp"
#include "kinverify/facefeat.hpp"
#include "kinverify/kinmodels.hpp"
#include "kinverify/optim.hpp"
#include "kinverify/select.hpp"

namespace py = pybind11;
using namespace kinverify;

namespace {

facefeat::FaceImage image_from_array(
    const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& array) {
  if (array.ndim() != 2 || array.shape(0) != facefeat::kImageSize ||
      array.shape(1) != facefeat::kImageSize) {
    throw std::invalid_argument("face image must be a 64x64 uint8 array");
  }
  facefeat::FaceImage image;
  std::memcpy(image.pixels.data(), array.data(), image.pixels.size());
  return image;
}

}  // namespace

PYBIND11_MODULE(_kinverify, m) {
  m.doc() = "Tri-subject kinship verification: bilinear similarity models, "
            "trace-norm solvers and spatially voted patch selection";

  // ---- optim
  py::class_<optim::SolverConfig>(m, "SolverConfig")
      .def(py::init<>())
      .def_readwrite("max_iterations", &optim::SolverConfig::max_iterations)
      .def_readwrite("step_size_init", &optim::SolverConfig::step_size_init)
      .def_readwrite("tolerance", &optim::SolverConfig::tolerance)
      .def_readwrite("seed", &optim::SolverConfig::seed);

  py::class_<optim::TraceNormFit>(m, "TraceNormFit")
      .def_readonly("w", &optim::TraceNormFit::w)
      .def_readonly("bias", &optim::TraceNormFit::bias)
      .def_readonly("objective_trace", &optim::TraceNormFit::objective_trace);

  py::class_<optim::L1Fit>(m, "L1Fit")
      .def_readonly("u", &optim::L1Fit::u)
      .def_readonly("objective_trace", &optim::L1Fit::objective_trace);

  m.def("sigmoid", &optim::sigmoid, py::arg("x"));
  m.def("soft_threshold", &optim::soft_threshold, py::arg("v"), py::arg("tau"));
  m.def("prox_trace_norm", &optim::prox_trace_norm, py::arg("m"), py::arg("tau"));
  m.def("trace_norm", &optim::trace_norm, py::arg("m"));
  m.def("fit_trace_norm_bilinear", &optim::fit_trace_norm_bilinear,
        py::arg("left"), py::arg("right"), py::arg("labels"), py::arg("lam"),
        py::arg("config") = optim::SolverConfig{});
  m.def("fit_l1_logistic", &optim::fit_l1_logistic, py::arg("samples"),
        py::arg("labels"), py::arg("gamma"),
        py::arg("config") = optim::SolverConfig{});
  m.def("bilinear_gradient_check", &optim::bilinear_gradient_check,
        py::arg("left"), py::arg("right"), py::arg("labels"), py::arg("w"),
        py::arg("bias"), py::arg("h") = 1e-5);

  // ---- facefeat
  m.def(
      "extract_patch_grid",
      [](const py::array_t<std::uint8_t,
                           py::array::c_style | py::array::forcecast>& image) {
        return facefeat::extract_patch_grid(image_from_array(image)).descriptors;
      },
      py::arg("image"),
      "49 patch descriptors (columns) of a 64x64 uint8 face image");
  m.def(
      "face_feature",
      [](const py::array_t<std::uint8_t,
                           py::array::c_style | py::array::forcecast>& image,
         const std::optional<std::vector<int>>& selection) {
        const facefeat::PatchGrid grid =
            facefeat::extract_patch_grid(image_from_array(image));
        return (selection ? facefeat::face_feature(grid, *selection)
                          : facefeat::face_feature(grid))
            .values;
      },
      py::arg("image"), py::arg("selection") = std::nullopt,
      "Concatenated descriptors of the selected (default all 49) patches");

  // ---- types
  py::class_<TripleSample>(m, "TripleSample")
      .def(py::init([](Eigen::VectorXd father, Eigen::VectorXd mother,
                       Eigen::VectorXd child, int label, std::string family_id) {
             TripleSample t;
             t.father = std::move(father);
             t.mother = std::move(mother);
             t.child = std::move(child);
             t.label = label;
             t.family_id = std::move(family_id);
             return t;
           }),
           py::arg("father"), py::arg("mother"), py::arg("child"),
           py::arg("label") = 1, py::arg("family_id") = "")
      .def_readwrite("father", &TripleSample::father)
      .def_readwrite("mother", &TripleSample::mother)
      .def_readwrite("child", &TripleSample::child)
      .def_readwrite("label", &TripleSample::label)
      .def_readwrite("family_id", &TripleSample::family_id);

  // ---- select
  py::class_<select::PatchSelection>(m, "PatchSelection")
      .def_readonly("k", &select::PatchSelection::k)
      .def_readonly("father_patches", &select::PatchSelection::father_patches)
      .def_readonly("mother_patches", &select::PatchSelection::mother_patches)
      .def_readonly("child_patches", &select::PatchSelection::child_patches)
      .def_readonly("votes_father", &select::PatchSelection::votes_father)
      .def_readonly("votes_mother", &select::PatchSelection::votes_mother)
      .def_readonly("votes_child", &select::PatchSelection::votes_child)
      .def_readonly("degenerate_roles", &select::PatchSelection::degenerate_roles)
      .def("to_json", &select::PatchSelection::to_json);

  m.def("select_top_k", &select::select_top_k, py::arg("votes"), py::arg("k"));
  m.def(
      "vote_patches",
      [](const Eigen::VectorXd& u_father, const Eigen::VectorXd& u_mother,
         int per_patch) {
        const select::RoleVotes votes = select::vote_patches(
            u_father, u_mother, select::GroupMap(49, per_patch));
        return py::make_tuple(votes.father, votes.mother, votes.child);
      },
      py::arg("u_father"), py::arg("u_mother"), py::arg("per_patch") = 128);
  m.def("fit_selection", &select::fit_selection, py::arg("triples"),
        py::arg("gamma"), py::arg("k"), py::arg("config") = optim::SolverConfig{});

  // ---- kinmodels
  py::class_<kinmodels::PriorPair>(m, "PriorPair")
      .def_readonly("p_fc", &kinmodels::PriorPair::p_fc)
      .def_readonly("p_mc", &kinmodels::PriorPair::p_mc);
  m.def("compute_priors", &kinmodels::compute_priors, py::arg("s_father"),
        py::arg("s_mother"));
  m.def("stabilize_priors", &kinmodels::stabilize_priors, py::arg("priors"),
        py::arg("alpha"));
  m.def("bilinear_score", &kinmodels::bilinear_score, py::arg("a"), py::arg("w"),
        py::arg("b"));

  py::class_<kinmodels::SBMModel>(m, "SBMModel")
      .def_readonly("w_father", &kinmodels::SBMModel::w_father)
      .def_readonly("w_mother", &kinmodels::SBMModel::w_mother)
      .def_readonly("beta1", &kinmodels::SBMModel::beta1)
      .def_readonly("beta2", &kinmodels::SBMModel::beta2)
      .def_readonly("bias", &kinmodels::SBMModel::bias)
      .def("predict",
           [](const kinmodels::SBMModel& model, const Eigen::VectorXd& f,
              const Eigen::VectorXd& mth, const Eigen::VectorXd& c) {
             return kinmodels::predict_sbm(model, f, mth, c);
           });
  py::class_<kinmodels::ABMModel>(m, "ABMModel")
      .def_readonly("w_parent", &kinmodels::ABMModel::w_parent)
      .def_readonly("bias", &kinmodels::ABMModel::bias)
      .def("predict",
           [](const kinmodels::ABMModel& model, const Eigen::VectorXd& f,
              const Eigen::VectorXd& mth, const Eigen::VectorXd& c) {
             return kinmodels::predict_abm(model, f, mth, c);
           });
  py::class_<kinmodels::RSBMModel>(m, "RSBMModel")
      .def_readonly("w_father", &kinmodels::RSBMModel::w_father)
      .def_readonly("w_mother", &kinmodels::RSBMModel::w_mother)
      .def_readonly("beta1", &kinmodels::RSBMModel::beta1)
      .def_readonly("beta2", &kinmodels::RSBMModel::beta2)
      .def_readonly("bias", &kinmodels::RSBMModel::bias)
      .def_readonly("alpha", &kinmodels::RSBMModel::alpha)
      .def("predict",
           [](const kinmodels::RSBMModel& model, const Eigen::VectorXd& f,
              const Eigen::VectorXd& mth, const Eigen::VectorXd& c) {
             return kinmodels::predict_rsbm(model, f, mth, c);
           });
  py::class_<kinmodels::ConcatModel>(m, "ConcatModel")
      .def_readonly("w", &kinmodels::ConcatModel::w)
      .def_readonly("bias", &kinmodels::ConcatModel::bias)
      .def("predict",
           [](const kinmodels::ConcatModel& model, const Eigen::VectorXd& f,
              const Eigen::VectorXd& mth, const Eigen::VectorXd& c) {
             return kinmodels::predict_concat(model, f, mth, c);
           });
  py::class_<kinmodels::BlockEnsemble>(m, "BlockEnsemble")
      .def_readonly("block_dim", &kinmodels::BlockEnsemble::block_dim)
      .def_readonly("father_patches", &kinmodels::BlockEnsemble::father_patches)
      .def_readonly("mother_patches", &kinmodels::BlockEnsemble::mother_patches)
      .def_readonly("child_patches", &kinmodels::BlockEnsemble::child_patches)
      .def_readonly("combiner_weights", &kinmodels::BlockEnsemble::combiner_weights)
      .def_readonly("combiner_bias", &kinmodels::BlockEnsemble::combiner_bias)
      .def("predict",
           [](const kinmodels::BlockEnsemble& model, const Eigen::VectorXd& f,
              const Eigen::VectorXd& mth, const Eigen::VectorXd& c) {
             return kinmodels::predict_block_ensemble(model, f, mth, c);
           });

  m.def("fit_sbm", &kinmodels::fit_sbm, py::arg("triples"), py::arg("lam"),
        py::arg("config") = optim::SolverConfig{});
  m.def("fit_abm", &kinmodels::fit_abm, py::arg("triples"), py::arg("lam"),
        py::arg("config") = optim::SolverConfig{});
  m.def("fit_rsbm", &kinmodels::fit_rsbm, py::arg("triples"), py::arg("lam"),
        py::arg("alpha"), py::arg("iterations"),
        py::arg("config") = optim::SolverConfig{});
  m.def("fit_concat_baseline", &kinmodels::fit_concat_baseline, py::arg("triples"),
        py::arg("config") = optim::SolverConfig{});
  m.def(
      "fit_block_ensemble",
      [](const std::string& kind, const std::vector<TripleSample>& triples,
         const select::PatchSelection& selection, double lam, double alpha,
         int iterations, const optim::SolverConfig& config) {
        return kinmodels::fit_block_ensemble(kinmodels::parse_model_kind(kind),
                                             triples, selection, lam, alpha,
                                             iterations, config);
      },
      py::arg("kind"), py::arg("triples"), py::arg("selection"), py::arg("lam"),
      py::arg("alpha") = 0.1, py::arg("iterations") = 5,
      py::arg("config") = optim::SolverConfig{});
  m.def(
      "predict_pair",
      [](const kinmodels::SBMModel& model, const Eigen::VectorXd& parent,
         const Eigen::VectorXd& child, const std::string& role) {
        return kinmodels::predict_pair(model, parent, child,
                                       role == "father"
                                           ? kinmodels::ParentRole::kFather
                                           : kinmodels::ParentRole::kMother);
      },
      py::arg("model"), py::arg("parent"), py::arg("child"), py::arg("role"));
  m.def(
      "permute_roles",
      [](const std::vector<TripleSample>& triples, const std::string& form) {
        return kinmodels::permute_roles(triples,
                                        kinmodels::parse_relation_form(form));
      },
      py::arg("triples"), py::arg("form"));

  // ---- datakit
  py::class_<datakit::SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("dim", &datakit::SynthConfig::dim)
      .def_readwrite("n_pos", &datakit::SynthConfig::n_pos)
      .def_readwrite("rank", &datakit::SynthConfig::rank)
      .def_readwrite("noise_sigma", &datakit::SynthConfig::noise_sigma)
      .def_readwrite("seed", &datakit::SynthConfig::seed)
      .def_readwrite("margin", &datakit::SynthConfig::margin)
      .def_readwrite("planted_patches", &datakit::SynthConfig::planted_patches)
      .def_readwrite("resemblance_high", &datakit::SynthConfig::resemblance_high)
      .def_readwrite("resemblance_low", &datakit::SynthConfig::resemblance_low)
      .def_property(
          "mode",
          [](const datakit::SynthConfig& c) { return datakit::synth_mode_name(c.mode); },
          [](datakit::SynthConfig& c, const std::string& name) {
            c.mode = datakit::parse_synth_mode(name);
          });
  py::class_<datakit::SynthData>(m, "SynthData")
      .def_readonly("positives", &datakit::SynthData::positives)
      .def_readonly("negatives", &datakit::SynthData::negatives)
      .def_readonly("w_father", &datakit::SynthData::w_father)
      .def_readonly("w_mother", &datakit::SynthData::w_mother)
      .def_readonly("w_parent", &datakit::SynthData::w_parent)
      .def_readonly("father_patches", &datakit::SynthData::father_patches)
      .def_readonly("mother_patches", &datakit::SynthData::mother_patches)
      .def_readonly("child_patches", &datakit::SynthData::child_patches)
      .def_readonly("dominant_parent", &datakit::SynthData::dominant_parent)
      .def("all", &datakit::SynthData::all);
  m.def("synth_generate", &datakit::synth_generate, py::arg("config"));
  m.def("generate_negatives", &datakit::generate_negatives, py::arg("families"),
        py::arg("seed"));
  m.def("substream_seed", &datakit::substream_seed, py::arg("base"),
        py::arg("name"));

  // ---- evalkit
  m.def("accuracy", &evalkit::accuracy, py::arg("decisions"), py::arg("labels"));
  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        const evalkit::RocCurve curve = evalkit::roc_auc(scores, labels);
        return py::make_tuple(curve.points, curve.auc);
      },
      py::arg("scores"), py::arg("labels"));
}
