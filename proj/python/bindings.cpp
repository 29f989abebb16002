#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "calgate/calibration.hpp"
#include "calgate/datamodel.hpp"
#include "calgate/error.hpp"
#include "calgate/gate.hpp"
#include "calgate/metrics.hpp"
#include "calgate/modelmath.hpp"
#include "calgate/selective.hpp"
#include "calgate/simulator.hpp"
#include "calgate/synth.hpp"

namespace py = pybind11;
using namespace calgate;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const Array& a) {
  if (a.ndim() != 1) throw ValidationError("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

FileFormat resolve_format(const std::filesystem::path& path, const std::optional<std::string>& fmt) {
  return fmt ? parse_format(*fmt) : format_from_path(path);
}

Dataset dataset_from_arrays(const Array& logits, const std::vector<int>& labels,
                            const std::optional<std::vector<std::string>>& stream_ids,
                            const std::optional<std::vector<std::int64_t>>& t_ms) {
  if (logits.ndim() != 2) throw ValidationError("logits must be a 2-D array (n, K)");
  const auto n = static_cast<std::size_t>(logits.shape(0));
  const auto k = static_cast<int>(logits.shape(1));
  if (labels.size() != n) throw ValidationError("labels length does not match logits rows");
  if (stream_ids && stream_ids->size() != n) throw ValidationError("stream_ids length does not match logits rows");
  if (t_ms && t_ms->size() != n) throw ValidationError("t_ms length does not match logits rows");
  std::vector<LogitRecord> rs;
  rs.reserve(n);
  const double* p = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    LogitRecord r;
    r.stream_id = stream_ids ? (*stream_ids)[i] : "s0";
    r.t_ms = t_ms ? (*t_ms)[i] : static_cast<std::int64_t>(i) * 40;
    r.logits.assign(p + i * k, p + (i + 1) * k);
    r.label = labels[i];
    rs.push_back(std::move(r));
  }
  return Dataset(k, std::move(rs));
}

py::array_t<double> logits_array(const Dataset& ds) {
  py::array_t<double> out({static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(ds.k())});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.k(); ++j) m(i, j) = ds.records()[i].logits[j];
  }
  return out;
}

py::dict sweep_point_dict(const SweepPoint& p) {
  py::dict d;
  d["tau"] = p.tau;
  d["coverage"] = p.coverage;
  d["aop"] = p.aop ? py::cast(*p.aop) : py::none();
  d["region_epsilon"] = p.region_epsilon;
  d["bound_satisfied"] = p.bound_satisfied;
  return d;
}

py::dict sim_dict(const SimResult& r) {
  py::dict d;
  d["tau"] = r.tau;
  d["tau_on"] = r.tau_on;
  d["tau_off"] = r.tau_off;
  d["ticks"] = r.ticks;
  d["act_ticks"] = r.act_ticks;
  d["coverage"] = r.coverage();
  const auto prec = r.act_only_precision();
  d["precision"] = prec ? py::cast(*prec) : py::none();
  d["transitions"] = r.transitions;
  d["skipped_streams"] = r.skipped_streams;
  return d;
}

py::dict event_dict(const GateEvent& e) {
  py::dict d;
  d["t_ms"] = e.t_ms;
  d["confidence"] = e.confidence_in;
  d["mode"] = std::string(to_string(e.mode_out));
  d["transitioned"] = e.transitioned;
  d["suppressed"] = e.suppressed_by_refractory;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Post-hoc calibration, selective prediction and a hysteretic Act/Hold gate";
  m.attr("__version__") = CALGATE_VERSION;

  static py::exception<IoError> io_exc(m, "IoError", PyExc_OSError);
  static py::exception<ValidationError> val_exc(m, "ValidationError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const IoError& e) {
      py::set_error(io_exc, e.what());
    } catch (const ValidationError& e) {
      py::set_error(val_exc, e.what());
    }
  });

  // ---------------------------------------------------------------- data
  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("logits"), py::arg("labels"), py::arg("stream_ids") = py::none(),
           py::arg("t_ms") = py::none(),
           "Build from an (n, K) logit array; rows are regrouped per stream in first-appearance order.")
      .def_property_readonly("k", &Dataset::k)
      .def("__len__", &Dataset::size)
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; })
      .def("stream_ids", &Dataset::stream_ids)
      .def("logits", &logits_array)
      .def("labels",
           [](const Dataset& ds) {
             std::vector<int> out;
             for (const auto& r : ds.records()) out.push_back(r.label);
             return out;
           })
      .def("t_ms",
           [](const Dataset& ds) {
             std::vector<std::int64_t> out;
             for (const auto& r : ds.records()) out.push_back(r.t_ms);
             return out;
           })
      .def("record_stream_ids", [](const Dataset& ds) {
        std::vector<std::string> out;
        for (const auto& r : ds.records()) out.push_back(r.stream_id);
        return out;
      });

  m.def(
      "load_dataset",
      [](const std::filesystem::path& path, std::optional<std::string> format) {
        return load_dataset(path, resolve_format(path, format));
      },
      py::arg("path"), py::arg("format") = py::none());
  m.def(
      "save_dataset",
      [](const Dataset& ds, const std::filesystem::path& path, std::optional<std::string> format) {
        save_dataset(ds, path, resolve_format(path, format));
      },
      py::arg("ds"), py::arg("path"), py::arg("format") = py::none());
  m.def(
      "split_by_stream",
      [](const Dataset& ds, double train, double val, double test, std::uint64_t seed) {
        return split_by_stream(ds, {train, val, test}, seed);
      },
      py::arg("ds"), py::arg("train"), py::arg("val"), py::arg("test"), py::arg("seed") = 0);

  // ---------------------------------------------------------------- math
  m.def("softmax", [](const Array& l) { return softmax(to_vec(l)); }, py::arg("logits"));

  // ---------------------------------------------------------------- calibration
  py::class_<CalibrationMap>(m, "CalibrationMap")
      .def_static("identity", &CalibrationMap::identity)
      .def_static("temperature", &CalibrationMap::temperature, py::arg("t"))
      .def_static("platt", &CalibrationMap::platt, py::arg("a"), py::arg("b"))
      .def_static(
          "isotonic",
          [](const std::vector<std::pair<double, double>>& bps) {
            std::vector<Breakpoint> v;
            for (const auto& [c, y] : bps) v.push_back({c, y});
            return CalibrationMap::isotonic(std::move(v));
          },
          py::arg("breakpoints"))
      .def_property_readonly("kind", [](const CalibrationMap& m) { return std::string(to_string(m.kind())); })
      .def("__eq__", [](const CalibrationMap& a, const CalibrationMap& b) { return a == b; })
      .def("to_json", &map_to_json)
      .def_static("from_json", &map_from_json, py::arg("text"))
      .def("save", [](const CalibrationMap& m, const std::filesystem::path& p) { save_map(m, p); })
      .def_static("load", &load_map, py::arg("path"))
      .def(
          "apply",
          [](const CalibrationMap& m, const Array& logits) {
            const auto v = to_vec(logits);
            const auto out = calgate::apply(m, std::span<const double>(v));
            return std::make_pair(out.pred_class, out.confidence);
          },
          py::arg("logits"), "(pred_class, confidence) for one logit vector")
      .def(
          "confidences",
          [](const CalibrationMap& m, const Dataset& ds) {
            std::vector<double> out;
            out.reserve(ds.size());
            for (const auto& r : ds.records()) out.push_back(calgate::apply(m, r).confidence);
            return out;
          },
          py::arg("ds"))
      .def("__repr__", [](const CalibrationMap& m) { return "CalibrationMap(" + map_to_json(m) + ")"; });

  m.def(
      "fit",
      [](const std::string& kind, const Dataset& val) {
        auto f = fit(parse_map_kind(kind), val);
        return std::make_pair(f.map, f.warnings);
      },
      py::arg("kind"), py::arg("val"), "Returns (map, warnings).");
  m.def(
      "pava",
      [](const Array& values, const std::optional<Array>& weights) {
        const auto v = to_vec(values);
        const auto w = weights ? to_vec(*weights) : std::vector<double>(v.size(), 1.0);
        return pava(v, w);
      },
      py::arg("values"), py::arg("weights") = py::none());

  // ---------------------------------------------------------------- metrics
  m.def(
      "ece",
      [](const Array& conf, const std::vector<int>& correct, int n_bins) {
        return ece(to_vec(conf), correct, n_bins).ece;
      },
      py::arg("confidences"), py::arg("correct"), py::arg("n_bins") = kDefaultBins);
  m.def("topk_accuracy", py::overload_cast<const Dataset&, int>(&topk_accuracy), py::arg("ds"), py::arg("k"));
  m.def(
      "report_json",
      [](const Dataset& ds, const CalibrationMap& map, int n_bins) { return report_to_json(report(ds, map, n_bins)); },
      py::arg("ds"), py::arg("map"), py::arg("n_bins") = kDefaultBins);

  // ---------------------------------------------------------------- selective
  m.def("default_tau_grid", &default_tau_grid);
  m.def(
      "sweep",
      [](const Dataset& ds, const CalibrationMap& map, std::optional<std::vector<double>> taus, int n_bins) {
        const auto c = sweep(ds, map, taus ? *taus : default_tau_grid(), n_bins);
        py::list out;
        for (const auto& p : c.points) out.append(sweep_point_dict(p));
        return out;
      },
      py::arg("ds"), py::arg("map"), py::arg("taus") = py::none(), py::arg("n_bins") = kDefaultBins);

  // ---------------------------------------------------------------- gate
  py::class_<GateConfig>(m, "GateConfig")
      .def(py::init([](double tau_on, double tau_off, std::int64_t refractory_ms) {
             GateConfig c{tau_on, tau_off, refractory_ms};
             c.validate();
             return c;
           }),
           py::arg("tau_on") = 0.55, py::arg("tau_off") = 0.45, py::arg("refractory_ms") = 200)
      .def_static("around", &GateConfig::around, py::arg("tau"), py::arg("half_band") = 0.05,
                  py::arg("refractory_ms") = 200)
      .def_readonly("tau_on", &GateConfig::tau_on)
      .def_readonly("tau_off", &GateConfig::tau_off)
      .def_readonly("refractory_ms", &GateConfig::refractory_ms);

  py::class_<Gate>(m, "Gate")
      .def(py::init<GateConfig>(), py::arg("config"))
      .def(
          "step", [](Gate& g, std::int64_t t, double c) { return event_dict(g.step(t, c)); }, py::arg("t_ms"),
          py::arg("confidence"))
      .def_property_readonly("mode", [](const Gate& g) { return std::string(to_string(g.state().mode)); });

  m.def(
      "run_gate",
      [](const GateConfig& cfg, const std::vector<std::pair<std::int64_t, double>>& trace) {
        std::vector<TracePoint> tr;
        for (const auto& [t, c] : trace) tr.push_back({t, c});
        py::list out;
        for (const auto& e : run_gate(cfg, tr)) out.append(event_dict(e));
        return out;
      },
      py::arg("config"), py::arg("trace"));

  // ---------------------------------------------------------------- simulator
  m.def(
      "simulate_sweep",
      [](const Dataset& ds, std::optional<CalibrationMap> map, std::optional<std::vector<double>> taus, double alpha,
         int k_filter, std::int64_t refractory_ms, std::optional<double> half_band, bool smooth_first) {
        SimConfig cfg;
        cfg.alpha = alpha;
        cfg.k_filter = k_filter;
        cfg.gate.refractory_ms = refractory_ms;
        cfg.map = map ? *map : CalibrationMap::identity();
        cfg.half_band = half_band;
        cfg.order = smooth_first ? CalibrationOrder::smooth_first : CalibrationOrder::automatic;
        py::list out;
        for (const auto& r : simulate_sweep(ds, cfg, taus ? *taus : default_tau_grid())) out.append(sim_dict(r));
        return out;
      },
      py::arg("ds"), py::arg("map") = py::none(), py::arg("taus") = py::none(), py::arg("alpha") = kDefaultAlpha,
      py::arg("k_filter") = kDefaultTopKFilter, py::arg("refractory_ms") = 200, py::arg("half_band") = py::none(),
      py::arg("smooth_first") = false);
  m.def(
      "benchmark_tick_latency",
      [](int k, std::int64_t n_ticks, std::optional<CalibrationMap> map) {
        SimConfig cfg;
        if (map) cfg.map = *map;
        const auto s = benchmark_tick_latency(cfg, k, n_ticks);
        return py::dict(py::arg("mean_us") = s.mean_us, py::arg("p99_us") = s.p99_us, py::arg("n_ticks") = s.n_ticks);
      },
      py::arg("k") = 21, py::arg("n_ticks") = 100000, py::arg("map") = py::none());

  // ---------------------------------------------------------------- synth
  m.def(
      "generate",
      [](int k, int n_streams, int ticks_per_stream, double base_accuracy, double scale, double label_persistence,
         double prediction_persistence, std::uint64_t seed) {
        SynthConfig c;
        c.k = k;
        c.n_streams = n_streams;
        c.ticks_per_stream = ticks_per_stream;
        c.base_accuracy = base_accuracy;
        c.overconfidence_scale = scale;
        c.label_persistence = label_persistence;
        c.prediction_persistence = prediction_persistence;
        c.seed = seed;
        return generate(c);
      },
      py::arg("k") = 21, py::arg("n_streams") = 20, py::arg("ticks_per_stream") = 500, py::arg("base_accuracy") = 0.40,
      py::arg("scale") = 1.0, py::arg("label_persistence") = 25.0, py::arg("prediction_persistence") = 5.0,
      py::arg("seed") = 0);
  m.def("generate_uncalibrated_fixture", &generate_uncalibrated_fixture, py::arg("seed") = 0);
}
