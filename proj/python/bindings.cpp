#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "quan/analysis.hpp"
#include "quan/checkpoint.hpp"
#include "quan/commands.hpp"
#include "quan/datasets.hpp"
#include "quan/rqc.hpp"
#include "quan/toric.hpp"
#include "quan/training.hpp"

namespace py = pybind11;
using namespace quan;

namespace {

using Bits = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// [count, rows, cols] array <-> snapshot list
std::vector<Snapshot> to_snapshots(const Bits& a) {
  if (a.ndim() != 3) throw ConfigError("snapshot array must have shape [count, rows, cols]");
  const Grid g{std::size_t(a.shape(1)), std::size_t(a.shape(2))};
  std::vector<Snapshot> out;
  const auto* p = a.data();
  for (py::ssize_t i = 0; i < a.shape(0); ++i, p += g.size())
    out.emplace_back(g, std::vector<std::uint8_t>(p, p + g.size()));
  return out;
}

Bits to_array(const std::vector<Snapshot>& s, Grid g) {
  Bits a({py::ssize_t(s.size()), py::ssize_t(g.rows), py::ssize_t(g.cols)});
  auto* p = a.mutable_data();
  for (const auto& x : s) p = std::copy(x.bits.begin(), x.bits.end(), p);
  return a;
}

// [sets, n, rows, cols] array -> list of sets
std::vector<SnapshotSet> to_sets(const Bits& a) {
  if (a.ndim() != 4) throw ConfigError("set array must have shape [sets, n, rows, cols]");
  const std::size_t n = a.shape(1), cell = a.shape(2) * a.shape(3);
  const Grid g{std::size_t(a.shape(2)), std::size_t(a.shape(3))};
  std::vector<SnapshotSet> out(a.shape(0));
  const auto* p = a.data();
  for (auto& set : out)
    for (std::size_t j = 0; j < n; ++j, p += cell) set.emplace_back(g, std::vector<std::uint8_t>(p, p + cell));
  return out;
}

nlohmann::json parse(const std::string& s) {
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

class Model {
 public:
  explicit Model(std::unique_ptr<Classifier<double>> m) : m_(std::move(m)) {}

  static Model from_config(const std::string& config, const std::string& init, std::uint64_t seed) {
    ModelConfig mc = parse(config).get<ModelConfig>();
    Model m(make_classifier<double>(mc));
    m.m_->initialize(parse_init_scheme(init), seed);
    return m;
  }

  static Model load(const std::string& path) { return Model(load_checkpoint<double>(path)); }

  py::array_t<double> predict(const Bits& sets) {
    const auto s = to_sets(sets);
    std::vector<const SnapshotSet*> ptr;
    for (const auto& x : s) ptr.push_back(&x);
    auto y = m_->predict(ptr);
    return py::array_t<double>(py::ssize_t(y.size()), y.data());
  }

  void save(const std::string& path) const {
    CheckpointInfo info;
    info.config = m_->config();
    save_checkpoint(path, *m_, info);
  }

  std::string config() const { return nlohmann::json(m_->config()).dump(); }
  std::size_t trainable_parameters() const { return m_->parameters().trainable_count(); }

 private:
  std::unique_ptr<Classifier<double>> m_;
};

}  // namespace

PYBIND11_MODULE(_quan, m) {
  m.doc() = "Set-attention classifiers for quantum measurement snapshots";
  m.attr("__version__") = kToolVersion;

  // Translators run newest first, so the subclass is registered last.
  auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("moment_order", &moment_order, py::arg("n_s"), py::arg("layers"));
  m.def("layers_required", &layers_required, py::arg("theta"), py::arg("n_s"));

  m.def(
      "toric_snapshots",
      [](std::size_t lv, std::size_t lh, double p_flip, std::size_t wr, std::size_t wc, std::size_t samples,
         std::uint64_t seed) {
        ToricParams tp{lv, lh, p_flip, wr, wc, samples, seed};
        return to_array(toric_window_snapshots(tp), Grid{wr, wc});
      },
      py::arg("lv") = 12, py::arg("lh") = 12, py::arg("p_flip") = 0.0, py::arg("window_rows") = 6,
      py::arg("window_cols") = 6, py::arg("samples") = 1000, py::arg("seed") = 0,
      "Plaquette windows of noisy toric-code samples, shape [count, window_rows, window_cols].");

  m.def(
      "closed_loop_expectation",
      [](const Bits& plaquettes, std::size_t side) {
        auto s = to_snapshots(plaquettes);
        std::vector<double> out;
        for (const auto& x : s) out.push_back(closed_loop_expectation(x, side));
        return out;
      },
      py::arg("plaquettes"), py::arg("side"));

  m.def(
      "rqc_state",
      [](std::size_t rows, std::size_t cols, std::size_t depth, std::uint64_t seed, double theta, double phi) {
        RqcParams p;
        p.rows = rows;
        p.cols = cols;
        p.depth = depth;
        p.circuit_seed = seed;
        p.theta = theta;
        p.phi = phi;
        auto psi = rqc_simulate(p);
        return py::array_t<std::complex<double>>(py::ssize_t(psi.size()), psi.data());
      },
      py::arg("rows"), py::arg("cols"), py::arg("depth"), py::arg("seed") = 0,
      py::arg("theta") = RqcParams{}.theta, py::arg("phi") = RqcParams{}.phi);

  m.def(
      "rqc_samples",
      [](py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast> psi, std::size_t rows,
         std::size_t cols, std::size_t count, std::uint64_t seed) {
        StateVector v(psi.data(), psi.data() + psi.size());
        return to_array(rqc_sample_bitstrings(v, Grid{rows, cols}, count, seed), Grid{rows, cols});
      },
      py::arg("psi"), py::arg("rows"), py::arg("cols"), py::arg("count"), py::arg("seed") = 0);

  m.def(
      "xeb_exact",
      [](py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast> psi) {
        return xeb_exact(StateVector(psi.data(), psi.data() + psi.size()));
      },
      py::arg("psi"));

  m.def(
      "parity_samples",
      [](std::size_t rows, std::size_t cols, std::size_t order, const std::string& cls, std::size_t count,
         std::uint64_t seed, std::vector<std::size_t> mask) {
        if (cls != "A" && cls != "B") throw ConfigError("parity class must be A or B");
        return to_array(parity_task_sample(Grid{rows, cols}, order, cls == "A" ? ParityClass::A : ParityClass::B,
                                           count, seed, std::move(mask)),
                        Grid{rows, cols});
      },
      py::arg("rows"), py::arg("cols"), py::arg("order"), py::arg("cls"), py::arg("count"), py::arg("seed") = 0,
      py::arg("mask") = std::vector<std::size_t>{});

  m.def(
      "one_sided_ttest",
      [](const std::vector<double>& v, double mu0, double alpha) {
        auto t = one_sided_ttest(v, mu0, alpha);
        return py::dict(py::arg("mean") = t.mean, py::arg("t") = t.t, py::arg("p") = t.p,
                        py::arg("reject") = t.reject);
      },
      py::arg("values"), py::arg("mu0") = 0.5, py::arg("alpha") = 0.05);

  m.def(
      "spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
      py::arg("x"), py::arg("y"));

  m.def(
      "run",
      [](const std::string& command, const std::string& config) {
        py::gil_scoped_release release;
        run_command(command, resolve_run_config(parse(config), RunOptions{}));
      },
      py::arg("command"), py::arg("config"),
      "Runs generate, train, eval or report with a JSON config string, as the command-line tool does.");

  py::class_<Model>(m, "Model")
      .def_static("from_config", &Model::from_config, py::arg("config"), py::arg("init") = "xavier_normal",
                  py::arg("seed") = 0)
      .def_static("load", &Model::load, py::arg("path"))
      .def("predict", &Model::predict, py::arg("sets"), "Confidences for a [sets, n, rows, cols] array.")
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("trainable_parameters", &Model::trainable_parameters);
}
