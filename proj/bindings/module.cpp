// Python face of the toolkit: numpy in, numpy out for the core math, JSON
// strings for the pipeline stages so the configuration schema stays in one
// place.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "enginefault/config.hpp"
#include "enginefault/errors.hpp"
#include "enginefault/models.hpp"
#include "enginefault/ops.hpp"
#include "enginefault/pipeline.hpp"
#include "enginefault/tensor.hpp"

namespace py = pybind11;
using namespace enginefault;
namespace nn = enginefault::nn;

namespace {

nn::Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int> shape(a.ndim());
  for (int i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
  std::vector<double> values(a.data(), a.data() + a.size());
  return nn::Tensor::from(shape, std::move(values));
}

py::array_t<double> to_array(const nn::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::array_t<double> vec_to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  py::array_t<double> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

RunConfig parse_config(const std::string& config_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

py::dict eval_to_dict(const EvalMetrics& m) {
  py::dict d;
  d["loss"] = m.loss;
  d["step_accuracy"] = m.step_accuracy;
  d["window_accuracy"] = m.window_accuracy;
  d["windows"] = m.windows;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "engine fault synthesis, windowing and sequence classification";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgumentError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // ---- core math on numpy arrays ----

  m.def(
      "softmax",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
        nn::NoGradGuard ng;
        return to_array(nn::softmax(to_tensor(x)));
      },
      py::arg("x"), "Softmax over the last axis.");

  m.def(
      "cross_entropy",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
         const std::vector<int>& targets) {
        nn::NoGradGuard ng;
        return nn::cross_entropy(to_tensor(logits), targets).item();
      },
      py::arg("logits"), py::arg("targets"),
      "Mean negative log likelihood of targets under softmax(logits).");

  m.def(
      "multi_head_attention",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& q,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& k,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& v, int num_heads,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& w_o,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b_o, bool causal) {
        nn::NoGradGuard ng;
        return to_array(nn::multi_head_attention(to_tensor(q), to_tensor(k), to_tensor(v),
                                                 num_heads, to_tensor(w_o), to_tensor(b_o),
                                                 causal));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("num_heads"), py::arg("w_o"),
      py::arg("b_o"), py::arg("causal") = false,
      "Scaled dot-product attention over heads plus the output projection.");

  m.def(
      "attention_weights",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& q,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& k,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& v, int num_heads,
         bool causal) {
        nn::NoGradGuard ng;
        std::vector<double> weights;
        const auto out = nn::attention_heads(to_tensor(q), to_tensor(k), to_tensor(v), num_heads,
                                             causal, &weights);
        const auto& qs = out.shape();
        const py::ssize_t b = qs[0], tq = qs[1];
        const py::ssize_t tk = static_cast<py::ssize_t>(weights.size()) / (b * num_heads * tq);
        return vec_to_array(weights, {b, num_heads, tq, tk});
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("num_heads"), py::arg("causal") = false,
      "Attention probabilities as (batch, head, query, key).");

  // ---- pipeline stages, configured by a JSON string ----

  m.def("default_config", [] { return run_config_to_json(RunConfig{}).dump(2); },
        "The full configuration schema with its default values, as JSON.");

  m.def(
      "generate",
      [](const std::string& config) {
        const RunConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        const CorpusSummary s = run_generate(cfg);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["runs_written"] = s.runs_written;
        d["classes"] = s.classes;
        return d;
      },
      py::arg("config"), "Write the seeded run corpus described by the config.");

  m.def(
      "preprocess",
      [](const std::string& config) {
        const RunConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        const PreprocessReport r = run_preprocess(cfg);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["runs_total"] = r.runs_total;
        d["runs_ok"] = r.runs_ok;
        d["runs_skipped"] = r.runs_skipped;
        d["windows"] = r.windows;
        return d;
      },
      py::arg("config"), "Merge, resample and window the corpus into a feature store.");

  m.def(
      "train",
      [](const std::string& config) {
        const RunConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        const FitReport r = run_train(cfg);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["best_epoch"] = r.best_epoch;
        d["test"] = eval_to_dict(r.test);
        d["checkpoint_dir"] = r.checkpoint_dir.string();
        d["metrics_path"] = r.metrics_path.string();
        return d;
      },
      py::arg("config"), "Split, train, checkpoint and score the configured model.");

  m.def(
      "evaluate",
      [](const std::string& config, const std::string& checkpoint, const std::string& part,
         const std::string& split_file, const std::string& report_out) {
        const RunConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        const EvalMetrics m2 = run_evaluate(cfg, checkpoint, split_file, part, report_out);
        py::gil_scoped_acquire acquire;
        return eval_to_dict(m2);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("part") = "test",
      py::arg("split_file") = "", py::arg("report_out") = "",
      "Score an existing checkpoint on one split part.");

  m.def(
      "predict",
      [](const std::string& config, const std::string& checkpoint, const std::string& run_dir,
         const std::string& trace_out) {
        const RunConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        const PredictOutcome o = run_predict(cfg, checkpoint, run_dir, trace_out);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["verdict"] = o.verdict;
        d["has_fault"] = o.has_fault;
        d["fault_id"] = o.fault_id;
        d["onset_step"] = o.onset_step;
        d["steps"] = py::cast(o.trace.steps);
        d["probs"] = vec_to_array(
            o.trace.probs,
            {static_cast<py::ssize_t>(o.trace.rows()), static_cast<py::ssize_t>(o.trace.classes)});
        return d;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("run_dir"), py::arg("trace_out") = "",
      "Causal per-step monitoring of one raw run; returns the verdict and trace.");
}
