#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>

#include "accordion/config.hpp"
#include "accordion/simulator.hpp"
#include "accordion/verify.hpp"

namespace py = pybind11;
using namespace accordion;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  const auto buf = arr.request();
  if (buf.ndim == 1) {
    std::vector<double> data(static_cast<const double*>(buf.ptr),
                             static_cast<const double*>(buf.ptr) + buf.shape[0]);
    return Tensor(static_cast<std::size_t>(buf.shape[0]), 1, std::move(data));
  }
  if (buf.ndim == 2) {
    const auto rows = static_cast<std::size_t>(buf.shape[0]);
    const auto cols = static_cast<std::size_t>(buf.shape[1]);
    std::vector<double> data(static_cast<const double*>(buf.ptr),
                             static_cast<const double*>(buf.ptr) + rows * cols);
    return Tensor(rows, cols, std::move(data));
  }
  throw py::value_error("expected a 1-D or 2-D float array");
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  if (t.cols() == 1) {
    py::array_t<double> out(static_cast<py::ssize_t>(t.rows()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
  }
  py::array_t<double> out({static_cast<py::ssize_t>(t.rows()),
                           static_cast<py::ssize_t>(t.cols())});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

KvConfig config_from_dict(const std::map<std::string, std::string>& entries) {
  KvConfig cfg;
  for (const auto& [k, v] : entries) cfg.set(k, v);
  return cfg;
}

py::dict run_spec_dict(const std::map<std::string, std::string>& entries) {
  KvConfig cfg = config_from_dict(entries);
  RunSpec spec = spec_from_config(cfg);
  Model model = build_model(spec);
  Dataset data = build_dataset(spec);
  RunResult result = run(spec.train, std::move(model), data);

  py::dict out;
  out["csv"] = metrics_to_csv(result.metrics);
  out["final_metric"] = result.metrics.back().eval_metric;
  out["final_loss"] = result.metrics.back().train_loss;
  out["total_floats"] = result.total_floats;
  py::list trace;
  for (const auto& row : result.metrics) trace.append(row.level_summary);
  out["level_trace"] = trace;
  py::list norms;
  for (double n : result.epoch_grad_norms) norms.append(n);
  out["epoch_grad_norms"] = norms;
  return out;
}

py::dict default_config_dict() {
  py::dict out;
  for (const auto& [k, v] : spec_to_config(canonical_run_spec()).values())
    out[py::str(k)] = v;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "adaptive gradient-communication training simulator";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DivergenceError>(m, "DivergenceError");

  py::class_<CompressedMessage>(m, "CompressedMessage")
      .def_property_readonly("layer_id",
                             [](const CompressedMessage& msg) { return msg.layer_id; })
      .def_property_readonly("scheme",
                             [](const CompressedMessage& msg) { return to_string(msg.scheme); })
      .def_property_readonly("float_count",
                             [](const CompressedMessage& msg) { return msg.float_count; })
      .def("decompress",
           [](const CompressedMessage& msg) { return array_from_tensor(decompress(msg)); })
      .def("to_bytes", [](const CompressedMessage& msg) {
        auto bytes = to_bytes(msg);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      });

  py::class_<CompressorState>(m, "Compressor")
      .def(py::init<std::uint64_t>(), py::arg("seed") = 1)
      .def(
          "compress",
          [](CompressorState& state,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& grad,
             const std::string& level, const std::string& layer_id) {
            return compress(tensor_from_array(grad), level_from_string(level),
                            state, layer_id);
          },
          py::arg("grad"), py::arg("level"), py::arg("layer_id") = "w")
      .def(
          "residual",
          [](CompressorState& state, const std::string& layer_id,
             std::size_t rows, std::size_t cols) {
            return array_from_tensor(state.layer(layer_id, rows, cols).residual);
          },
          py::arg("layer_id"), py::arg("rows"), py::arg("cols"));

  m.def(
      "float_count",
      [](const std::string& level, std::size_t rows, std::size_t cols) {
        return float_count(level_from_string(level), rows, cols);
      },
      py::arg("level"), py::arg("rows"), py::arg("cols"),
      "Payload scalars one message costs for a layer shape.");

  m.def("decide_critical", &decide_critical, py::arg("delta_prev_norm"),
        py::arg("delta_curr_norm"), py::arg("gamma_curr"), py::arg("gamma_next"),
        py::arg("eta") = 0.5,
        "True when the norm-change criterion or a decay declares the regime critical.");

  m.def(
      "expected_lasso_grad",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mu,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
         double lam) {
        LemmaParams p;
        p.mu = tensor_from_array(mu);
        p.w = tensor_from_array(w);
        p.lambda = lam;
        return array_from_tensor(expected_lasso_grad(p));
      },
      py::arg("mu"), py::arg("w"), py::arg("lam") = 0.1);

  m.def(
      "topk_overlap",
      [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& grads,
         double k_fraction, std::uint64_t seed) {
        std::vector<Tensor> ts;
        ts.reserve(grads.size());
        for (const auto& g : grads) ts.push_back(tensor_from_array(g));
        return topk_overlap(ts, k_fraction, seed);
      },
      py::arg("grads"), py::arg("k_fraction") = 0.1, py::arg("seed") = 1);

  m.def(
      "lemma_montecarlo",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mu,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
         double lam, double sigma, std::size_t n, std::size_t trials,
         std::uint64_t seed) {
        LemmaParams p;
        p.mu = tensor_from_array(mu);
        p.w = tensor_from_array(w);
        p.lambda = lam;
        p.sigma = sigma;
        p.n = n;
        p.trials = trials;
        p.seed = seed;
        const LemmaReport rep = lemma_montecarlo(p);
        py::dict out;
        out["support_size"] = rep.support_size;
        out["k1"] = rep.k1;
        out["k2"] = rep.k2;
        out["gamma"] = rep.gamma;
        out["empirical_tail"] = rep.empirical_tail;
        out["chebyshev_bound"] = rep.chebyshev_bound;
        return out;
      },
      py::arg("mu"), py::arg("w"), py::arg("lam") = 0.1, py::arg("sigma") = 0.01,
      py::arg("n") = 1000, py::arg("trials") = 100, py::arg("seed") = 7);

  m.def("train", &run_spec_dict, py::arg("config"),
        "Run a training spec given as a flat {key: value} dict of strings.");
  m.def("canonical_config", &default_config_dict,
        "The default desk-scale run as a config dict.");
}
