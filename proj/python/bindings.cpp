#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mtscale/analysis.hpp"
#include "mtscale/data.hpp"
#include "mtscale/errors.hpp"
#include "mtscale/experiment.hpp"
#include "mtscale/network.hpp"
#include "mtscale/training.hpp"

namespace py = pybind11;
using namespace mtscale;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  std::copy(m.flat().begin(), m.flat().end(), a.mutable_data());
  return a;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ContractError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::dict rollout_dict(const Rollout& r) {
  py::dict d;
  d["predictions"] = to_array(r.predictions);
  d["cf_activity"] = to_array(r.cf_activity);
  d["cs_activity"] = to_array(r.cs_activity);
  return d;
}

py::dict log_dict(const TrainingLog& log) {
  py::dict d;
  d["initial_error"] = log.initial_error;
  d["curve"] = log.curve();
  d["mean_ms"] = log.mean_ms();
  d["total_steps"] = log.total_steps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_mtscale, m) {
  m.doc() = "Multiple time-scale recurrent networks";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::enum_<CellKind>(m, "CellKind")
      .value("MTRNN", CellKind::Mtrnn)
      .value("MTGRU", CellKind::Mtgru);

  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init<>())
      .def_readwrite("n_io", &NetworkConfig::n_io)
      .def_readwrite("n_cf", &NetworkConfig::n_cf)
      .def_readwrite("n_cs", &NetworkConfig::n_cs)
      .def_readwrite("tau_f", &NetworkConfig::tau_f)
      .def_readwrite("tau_s", &NetworkConfig::tau_s)
      .def_readwrite("cell_kind", &NetworkConfig::cell_kind)
      .def_readwrite("alpha", &NetworkConfig::alpha)
      .def_readwrite("seed", &NetworkConfig::seed)
      .def_readwrite("alpha_on_prediction", &NetworkConfig::alpha_on_prediction)
      .def_readwrite("linear_readout", &NetworkConfig::linear_readout)
      .def(py::self == py::self);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("eta", &TrainConfig::eta)
      .def_readwrite("threshold", &TrainConfig::threshold)
      .def_readwrite("max_iteration", &TrainConfig::max_iteration)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readwrite("name", &ExperimentConfig::name)
      .def_readwrite("network", &ExperimentConfig::network)
      .def_readwrite("training", &ExperimentConfig::training);
  m.def("preset_case1", &preset_case1);
  m.def("preset_case2", &preset_case2);
  m.def("load_experiment_config", &load_experiment_config, py::arg("path"));

  py::class_<Network>(m, "Network")
      .def_readonly("config", &Network::config)
      .def("blocks", [](const Network& net) {
        py::dict d;
        for (const auto& b : parameter_blocks(net)) d[py::str(b.name)] = to_array(*b.matrix);
        return d;
      })
      .def("set_block", [](Network& net, const std::string& name, const Array& values) {
        for (auto& b : parameter_blocks(net))
          if (b.name == name) {
            Matrix m = to_matrix(values);
            if (m.rows() != b.matrix->rows() || m.cols() != b.matrix->cols())
              throw ContractError(name + ": expected " + b.matrix->shape_string() + ", got " +
                                  m.shape_string());
            *b.matrix = std::move(m);
            return;
          }
        throw ContractError("unknown block " + name);
      });
  m.def("build_network", &build_network, py::arg("config"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("net"), py::arg("path"));
  m.def("load_checkpoint", py::overload_cast<const std::filesystem::path&>(&load_checkpoint),
        py::arg("path"));

  m.def(
      "run_sequence",
      [](const Network& net, const Array& seq, double alpha) {
        return rollout_dict(run_sequence(net, to_matrix(seq), alpha));
      },
      py::arg("net"), py::arg("seq"), py::arg("alpha"));
  m.def(
      "sequence_loss",
      [](const Network& net, const Array& seq, double alpha) {
        const Matrix s = to_matrix(seq);
        return sequence_loss(run_sequence(net, s, alpha), s).loss;
      },
      py::arg("net"), py::arg("seq"), py::arg("alpha"));
  m.def(
      "gradients",
      [](const Network& net, const Array& seq, double alpha) {
        const LossAndGradients lg = loss_and_gradients(net, to_matrix(seq), alpha);
        py::dict d;
        const auto blocks = parameter_blocks(net);
        for (std::size_t i = 0; i < blocks.size(); ++i)
          d[py::str(blocks[i].name)] = to_array(lg.gradients.blocks[i]);
        return py::make_tuple(lg.loss, d);
      },
      py::arg("net"), py::arg("seq"), py::arg("alpha"));
  m.def(
      "grad_check",
      [](const Network& net, const Array& seq, double alpha, double epsilon, std::size_t samples) {
        GradCheckOptions opts;
        opts.alpha = alpha;
        opts.epsilon = epsilon;
        opts.samples = samples;
        const GradCheckReport rep = grad_check(net, to_matrix(seq), opts);
        py::dict d;
        for (const auto& e : rep.entries) d[py::str(e.block)] = e.max_rel_error;
        return d;
      },
      py::arg("net"), py::arg("seq"), py::arg("alpha") = 0.0, py::arg("epsilon") = 1e-5,
      py::arg("samples") = 100);
  m.def(
      "sgd_iteration",
      [](Network& net, const Array& seq, const TrainConfig& cfg) {
        return sgd_iteration(net, to_matrix(seq), cfg);
      },
      py::arg("net"), py::arg("seq"), py::arg("config"));

  py::class_<SequenceSet>(m, "SequenceSet")
      .def_readonly("dims", &SequenceSet::dims)
      .def_readonly("seed", &SequenceSet::seed)
      .def_readonly("synthetic", &SequenceSet::synthetic)
      .def("__len__", &SequenceSet::size)
      .def("ids", [](const SequenceSet& s) {
        std::vector<std::string> ids;
        for (const auto& q : s.sequences) ids.push_back(q.id);
        return ids;
      })
      .def("__getitem__", [](const SequenceSet& s, const std::string& id) {
        return to_array(s.at(id).data);
      });

  py::class_<MultimodalSpec>(m, "MultimodalSpec")
      .def(py::init<>())
      .def_readwrite("n_sequences", &MultimodalSpec::n_sequences)
      .def_readwrite("seq_len", &MultimodalSpec::seq_len)
      .def_readwrite("motor_dims", &MultimodalSpec::motor_dims)
      .def_readwrite("n_locations", &MultimodalSpec::n_locations)
      .def_readwrite("noise_std", &MultimodalSpec::noise_std)
      .def_readwrite("seed", &MultimodalSpec::seed)
      .def_readwrite("full_sweep", &MultimodalSpec::full_sweep);

  m.def("gen_case1", &gen_case1);
  m.def("gen_multimodal", &gen_multimodal, py::arg("spec") = MultimodalSpec{});
  m.def(
      "encode_command",
      [](const std::string& verb, const std::string& noun) { return encode_command(verb, noun); },
      py::arg("verb"), py::arg("noun"));
  m.def("save_set", &save_set, py::arg("set"), py::arg("dir"));
  m.def("load_set", &load_set, py::arg("dir"));

  m.def(
      "train",
      [](const SequenceSet& data, Network& net, const TrainConfig& cfg) {
        py::gil_scoped_release release;
        const TrainingLog log = train(data, net, cfg);
        py::gil_scoped_acquire acquire;
        return log_dict(log);
      },
      py::arg("data"), py::arg("net"), py::arg("config"));

  m.def(
      "context_pca",
      [](const Network& net, const Array& seq, double alpha) {
        const ContextPca p = context_pca(run_sequence(net, to_matrix(seq), alpha));
        py::dict d;
        d["cf"] = to_array(p.cf.projected);
        d["cs"] = to_array(p.cs.projected);
        d["cf_fraction"] = p.cf.variance_fraction;
        d["cs_fraction"] = p.cs.variance_fraction;
        return d;
      },
      py::arg("net"), py::arg("seq"), py::arg("alpha"));
  m.def(
      "pca_2d",
      [](const Array& data) {
        const Pca2d p = pca_2d(to_matrix(data));
        return py::make_tuple(to_array(p.projected), p.explained_variance, to_array(p.components));
      },
      py::arg("data"));

  m.def(
      "compare",
      [](const ExperimentConfig& cfg, const SequenceSet& data, const std::filesystem::path& out,
         bool serial) {
        ComparisonReport rep;
        {
          py::gil_scoped_release release;
          rep = run_comparison(cfg, data, out, serial);
        }
        return py::module_::import("json").attr("loads")(to_json_value(rep).dump());
      },
      py::arg("config"), py::arg("data"), py::arg("out"), py::arg("serial") = true);
}
