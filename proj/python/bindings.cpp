#include "atomdet/benchmark.hpp"
#include "atomdet/config.hpp"
#include "atomdet/cramer_rao.hpp"
#include "atomdet/detectors.hpp"
#include "atomdet/pixel_stats.hpp"
#include "atomdet/simulator.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace atomdet;

namespace {

ToolkitConfig parse_config(const std::string& json_text, const std::string& preset) {
    const ToolkitConfig base = preset_config(preset);
    return json_text.empty() ? base : config_from_json(Json::parse(json_text), base);
}

template <typename T>
py::array_t<T> to_array(const Image<T>& img) {
    py::array_t<T> out({img.height(), img.width()});
    std::memcpy(out.mutable_data(), img.data(), img.size() * sizeof(T));
    return out;
}

ImageD from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) {
        throw InvalidArgument("frame must be a 2-D array");
    }
    ImageD img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.data(), a.data(), img.size() * sizeof(double));
    return img;
}

py::dict row_dict(const MetricsRow& r) {
    py::dict d;
    d["exposure"] = r.exposure;
    d["gamma_true"] = r.gamma_true;
    d["detector"] = r.detector;
    d["params"] = r.params;
    d["mean_empty"] = r.mean_empty;
    d["mean_occupied"] = r.mean_occupied;
    d["variance_empty"] = r.variance_empty;
    d["variance_occupied"] = r.variance_occupied;
    d["threshold"] = r.threshold;
    d["fp_rate"] = r.fp_rate;
    d["fn_rate"] = r.fn_rate;
    d["mean_wall_ms"] = r.mean_wall_ms;
    return d;
}

py::dict bound_dict(const BoundRow& r) {
    py::dict d;
    d["gamma"] = r.gamma;
    d["scenario"] = r.scenario;
    d["variance_floor"] = r.variance_floor;
    d["threshold"] = r.threshold;
    d["fp_floor"] = r.fp_floor;
    d["fn_floor"] = r.fn_floor;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Atom detection toolkit: camera model, Cramer-Rao bounds and detectors";

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<ModelError>(m, "ModelError", PyExc_ArithmeticError);

    m.def("preset_config", [](const std::string& preset) { return to_json(preset_config(preset)).dump(); },
          py::arg("preset") = "desk", "Preset configuration as JSON text.");

    m.def("psf", [](const std::string& shape, double width, int window) {
              return to_array(build_psf({psf_shape_from_string(shape), width, window}).weights());
          },
          py::arg("shape") = "airy", py::arg("width") = 5.0, py::arg("window") = 81);

    m.def("pixel_pdf",
          [](double lambda, double gain, double offset, double sigma) {
              CameraModel c;
              c.gain = gain;
              c.offset = offset;
              c.readout_sigma = sigma;
              const PdfAccumulator p = poisson_gaussian_pdf(lambda, c);
              std::vector<double> q(p.size());
              for (std::size_t j = 0; j < p.size(); ++j) {
                  q[j] = p.q(j);
              }
              return py::make_tuple(py::array(py::cast(q)), py::array(py::cast(p.density())),
                                    py::array(py::cast(p.d_lambda())));
          },
          py::arg("lam"), py::arg("gain") = 0.5, py::arg("offset") = 200.0, py::arg("sigma") = 1.6,
          "(q, density, d density / d lambda) of one pixel's count value.");

    m.def("fisher_weight",
          [](double lambda, double gain, double sigma) {
              CameraModel c;
              c.gain = gain;
              c.readout_sigma = sigma;
              return fisher_weight(lambda, c);
          },
          py::arg("lam"), py::arg("gain") = 0.5, py::arg("sigma") = 1.6);

    m.def("bound_sweep",
          [](const std::vector<double>& gammas, const std::vector<std::string>& scenarios,
             const std::string& config_json, const std::string& preset) {
              const ToolkitConfig c = parse_config(config_json, preset);
              const auto labels = scenarios.empty() ? all_scenario_labels() : scenarios;
              py::list out;
              for (const auto& r :
                   bound_sweep(gammas, labels, c.dataset.camera, c.dataset.psf, c.dataset.rate, c.bound)) {
                  out.append(bound_dict(r));
              }
              return out;
          },
          py::arg("gammas"), py::arg("scenarios") = std::vector<std::string>{},
          py::arg("config_json") = "", py::arg("preset") = "desk");

    m.def("error_rate_floor",
          [](double var_empty, double var_occupied, double gamma) {
              const ErrorRateFloor f = error_rate_floor(var_empty, var_occupied, gamma);
              return py::make_tuple(f.threshold, f.fp, f.fn);
          },
          py::arg("var_empty"), py::arg("var_occupied"), py::arg("gamma"));

    m.def("fn_rate_fit", &fn_rate_fit, py::arg("x"));

    m.def("power_law_fit",
          [](const std::vector<double>& k, const std::vector<double>& v) {
              const PowerLawFit f = power_law_fit(k, v);
              return py::make_tuple(f.a, f.b, f.c);
          },
          py::arg("k"), py::arg("values"), "(a, b, c) of a * k^b + c.");

    m.def("simulate",
          [](const std::string& config_json, const std::string& preset) {
              const ToolkitConfig c = parse_config(config_json, preset);
              Dataset d;
              {
                  py::gil_scoped_release release;
                  d = generate_dataset(c.dataset);
              }
              const auto& g = c.dataset.geometry;
              py::array_t<std::uint16_t> frames(
                  {static_cast<py::ssize_t>(d.frames.size()), static_cast<py::ssize_t>(g.image_height()),
                   static_cast<py::ssize_t>(g.image_width())});
              py::array_t<bool> truth({static_cast<py::ssize_t>(d.frames.size()),
                                       static_cast<py::ssize_t>(g.site_count())});
              auto t = truth.mutable_unchecked<2>();
              const std::size_t px = static_cast<std::size_t>(g.image_width()) * g.image_height();
              py::list exposures;
              for (std::size_t k = 0; k < d.frames.size(); ++k) {
                  std::memcpy(frames.mutable_data() + k * px, d.frames[k].pixels.data(), px * 2);
                  for (std::size_t s = 0; s < g.site_count(); ++s) {
                      t(k, s) = d.ground_truth[k][s];
                  }
                  exposures.append(d.frames[k].metadata.exposure);
              }
              return py::make_tuple(frames, truth, exposures);
          },
          py::arg("config_json") = "", py::arg("preset") = "desk",
          "(frames uint16 [N, H, W], truth bool [N, sites], exposure per frame).");

    m.def("detect",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& frame,
             double exposure, const std::string& algo, const std::string& params,
             const std::string& config_json, const std::string& preset) {
              const ToolkitConfig c = parse_config(config_json, preset);
              DetectorConfig defaults;
              defaults.gns = c.gns;
              const DetectorConfig det = parse_detector(algo, params, defaults);
              const DetectorContext ctx{c.dataset.geometry, dataset_psfs(c.dataset), c.dataset.camera,
                                        exposure};
              const ImageD img = from_array(frame);
              EstimateSet e;
              {
                  py::gil_scoped_release release;
                  e = run_detector(det, img, ctx);
              }
              return py::array(py::cast(e.estimates));
          },
          py::arg("frame"), py::arg("exposure"), py::arg("algo"), py::arg("params") = "",
          py::arg("config_json") = "", py::arg("preset") = "desk",
          "Per-site estimates in electrons for one frame of counts.");

    m.def("benchmark",
          [](const std::string& config_json, const std::string& preset, const std::filesystem::path& out,
             const std::vector<std::string>& detectors) {
              const ToolkitConfig c = parse_config(config_json, preset);
              BenchmarkOptions opt;
              opt.detectors = detectors;
              BenchmarkResult r;
              {
                  py::gil_scoped_release release;
                  r = run_benchmark(c, out, opt);
              }
              py::list metrics, bounds;
              for (const auto& row : r.metrics) {
                  metrics.append(row_dict(row));
              }
              for (const auto& row : r.bounds) {
                  bounds.append(bound_dict(row));
              }
              py::dict rates;
              for (const auto& row : r.rates) {
                  rates[py::str(row.detector + "[" + row.params + "]")] = row.slope;
              }
              return py::make_tuple(metrics, bounds, rates);
          },
          py::arg("config_json") = "", py::arg("preset") = "desk", py::arg("out") = std::filesystem::path{},
          py::arg("detectors") = std::vector<std::string>{});
}
