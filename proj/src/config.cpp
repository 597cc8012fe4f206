#include "atomdet/config.hpp"

#include "atomdet/error.hpp"

#include <fstream>

namespace atomdet {

namespace {

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
        }
    }
}

} // namespace

Json to_json(const LatticeGeometry& g) {
    return Json{{"rows", g.rows()},
                {"cols", g.cols()},
                {"spacing", g.spacing()},
                {"origin", {g.origin_x(), g.origin_y()}},
                {"image_width", g.image_width()},
                {"image_height", g.image_height()}};
}

LatticeGeometry lattice_from_json(const Json& j) {
    int rows = 10, cols = 10, width = 256, height = 256;
    double spacing = 20.0;
    read_opt(j, "rows", rows);
    read_opt(j, "cols", cols);
    read_opt(j, "spacing", spacing);
    read_opt(j, "image_width", width);
    read_opt(j, "image_height", height);
    if (j.contains("origin")) {
        const auto origin = j.at("origin").get<std::vector<double>>();
        if (origin.size() != 2) {
            throw InvalidArgument("lattice.origin must be [x, y]");
        }
        return LatticeGeometry(rows, cols, spacing, origin[0], origin[1], width, height);
    }
    return LatticeGeometry::centered(rows, cols, spacing, width, height);
}

Json to_json(const CameraModel& c) {
    return Json{{"gain", c.gain},
                {"offset", c.offset},
                {"readout_sigma", c.readout_sigma},
                {"background", c.background},
                {"background_rate", c.background_rate},
                {"max_count", c.max_count}};
}

CameraModel camera_from_json(const Json& j, const CameraModel& defaults) {
    CameraModel c = defaults;
    read_opt(j, "gain", c.gain);
    read_opt(j, "offset", c.offset);
    read_opt(j, "readout_sigma", c.readout_sigma);
    read_opt(j, "background", c.background);
    read_opt(j, "background_rate", c.background_rate);
    read_opt(j, "max_count", c.max_count);
    c.validate();
    return c;
}

Json to_json(const PsfModel& p) {
    return Json{{"model", to_string(p.shape)}, {"width", p.width}, {"window", p.window}};
}

PsfModel psf_from_json(const Json& j, const PsfModel& defaults) {
    PsfModel p = defaults;
    if (j.contains("model")) {
        p.shape = psf_shape_from_string(j.at("model").get<std::string>());
    }
    read_opt(j, "width", p.width);
    read_opt(j, "window", p.window);
    return p;
}

Json to_json(const DatasetSpec& s) {
    Json exposures_ms = Json::array();
    for (double e : s.exposures) {
        exposures_ms.push_back(e * 1e3);
    }
    return Json{{"name", s.name},
                {"lattice", to_json(s.geometry)},
                {"camera", to_json(s.camera)},
                {"psf", to_json(s.psf)},
                {"rate", s.rate},
                {"exposures_ms", exposures_ms},
                {"frames_per_exposure", s.frames_per_exposure},
                {"fill", s.fill},
                {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const Json& j) {
    DatasetSpec s;
    read_opt(j, "name", s.name);
    s.geometry = lattice_from_json(j.value("lattice", Json::object()));
    s.camera = camera_from_json(j.value("camera", Json::object()));
    s.psf = psf_from_json(j.value("psf", Json::object()));
    read_opt(j, "rate", s.rate);
    if (j.contains("exposures_ms")) {
        s.exposures.clear();
        for (double ms : j.at("exposures_ms").get<std::vector<double>>()) {
            s.exposures.push_back(ms * 1e-3);
        }
    }
    read_opt(j, "frames_per_exposure", s.frames_per_exposure);
    read_opt(j, "fill", s.fill);
    read_opt(j, "seed", s.seed);
    read_opt(j, "threads", s.threads);
    return s;
}

ToolkitConfig preset_config(const std::string& preset) {
    ToolkitConfig c;
    DatasetSpec& d = c.dataset;
    if (preset == "desk") {
        d.name = "desk";
        d.geometry = LatticeGeometry::centered(10, 10, 20.0, 256, 256);
        d.exposures = {0.010, 0.020, 0.030, 0.040, 0.060, 0.080};
        d.frames_per_exposure = 20;
        c.bound.psf_window = 41;
    } else if (preset == "paper") {
        d.name = "paper";
        d.geometry = LatticeGeometry::centered(40, 40, 20.0, 1024, 1024);
        d.exposures = {0.005, 0.010, 0.015, 0.020, 0.025, 0.030,
                       0.035, 0.040, 0.050, 0.060, 0.070, 0.080};
        d.frames_per_exposure = 100;
    } else {
        throw InvalidArgument("unknown preset '" + preset + "' (expected desk|paper)");
    }
    d.rate = 2881.0;
    d.fill = 0.5;
    d.seed = 1;
    return c;
}

ToolkitConfig config_from_json(const Json& j, ToolkitConfig c) {
    if (j.contains("preset")) {
        c = preset_config(j.at("preset").get<std::string>());
    }
    DatasetSpec& d = c.dataset;
    if (j.contains("lattice")) {
        d.geometry = lattice_from_json(j.at("lattice"));
    }
    if (j.contains("camera")) {
        d.camera = camera_from_json(j.at("camera"), d.camera);
    }
    if (j.contains("psf")) {
        d.psf = psf_from_json(j.at("psf"), d.psf);
    }
    if (j.contains("simulation")) {
        const Json& s = j.at("simulation");
        read_opt(s, "name", d.name);
        read_opt(s, "rate", d.rate);
        read_opt(s, "frames_per_exposure", d.frames_per_exposure);
        read_opt(s, "fill", d.fill);
        read_opt(s, "seed", d.seed);
        read_opt(s, "threads", d.threads);
        if (s.contains("exposures_ms")) {
            d.exposures.clear();
            for (double ms : s.at("exposures_ms").get<std::vector<double>>()) {
                d.exposures.push_back(ms * 1e-3);
            }
        }
    }
    if (j.contains("bound")) {
        const Json& b = j.at("bound");
        read_opt(b, "image_size", c.bound.image_size);
        read_opt(b, "sites", c.bound.sites);
        read_opt(b, "spacing", c.bound.spacing);
        read_opt(b, "psf_window", c.bound.psf_window);
        read_opt(b, "epsilon", c.bound.epsilon);
        read_opt(b, "full_diagonal", c.bound.full_diagonal);
        read_opt(b, "threads", c.bound.threads);
    }
    if (j.contains("detectors")) {
        const Json& det = j.at("detectors");
        if (det.contains("roi")) {
            read_opt(det.at("roi"), "radii", c.roi.radii);
        }
        if (det.contains("wiener")) {
            read_opt(det.at("wiener"), "balances", c.wiener.balances);
            read_opt(det.at("wiener"), "read_radius", c.wiener.read_radius);
        }
        if (det.contains("rl")) {
            read_opt(det.at("rl"), "iterations", c.rl.iterations);
            read_opt(det.at("rl"), "read_radius", c.rl.read_radius);
        }
        if (det.contains("gns")) {
            const Json& g = det.at("gns");
            read_opt(g, "psf_window", c.gns.psf_window);
            read_opt(g, "tile_size", c.gns.tile_size);
            read_opt(g, "refresh_every", c.gns.refresh_every);
            read_opt(g, "cg_tolerance", c.gns.cg_tolerance);
            read_opt(g, "cg_max_iterations", c.gns.cg_max_iterations);
            read_opt(g, "max_iterations", c.gns.max_iterations);
            read_opt(g, "step_tolerance", c.gns.step_tolerance);
            read_opt(g, "warm_start", c.gns.warm_start);
            read_opt(g, "warm_start_radius", c.gns.warm_start_radius);
            read_opt(g, "threads", c.gns.threads);
        }
    }
    if (j.contains("benchmark")) {
        const Json& b = j.at("benchmark");
        read_opt(b, "calibration_fraction", c.benchmark.calibration_fraction);
        read_opt(b, "timing_repetitions", c.benchmark.timing_repetitions);
        read_opt(b, "compute_bounds", c.benchmark.compute_bounds);
        read_opt(b, "detectors", c.benchmark.detectors);
    }
    return c;
}

Json to_json(const ToolkitConfig& c) {
    const DatasetSpec& d = c.dataset;
    Json exposures_ms = Json::array();
    for (double e : d.exposures) {
        exposures_ms.push_back(e * 1e3);
    }
    return Json{
        {"lattice", to_json(d.geometry)},
        {"camera", to_json(d.camera)},
        {"psf", to_json(d.psf)},
        {"simulation",
         {{"name", d.name},
          {"rate", d.rate},
          {"exposures_ms", exposures_ms},
          {"frames_per_exposure", d.frames_per_exposure},
          {"fill", d.fill},
          {"seed", d.seed},
          {"threads", d.threads}}},
        {"bound",
         {{"image_size", c.bound.image_size},
          {"sites", c.bound.sites},
          {"spacing", c.bound.spacing},
          {"psf_window", c.bound.psf_window},
          {"epsilon", c.bound.epsilon},
          {"full_diagonal", c.bound.full_diagonal},
          {"threads", c.bound.threads}}},
        {"detectors",
         {{"roi", {{"radii", c.roi.radii}}},
          {"wiener", {{"balances", c.wiener.balances}, {"read_radius", c.wiener.read_radius}}},
          {"rl", {{"iterations", c.rl.iterations}, {"read_radius", c.rl.read_radius}}},
          {"gns",
           {{"psf_window", c.gns.psf_window},
            {"tile_size", c.gns.tile_size},
            {"refresh_every", c.gns.refresh_every},
            {"cg_tolerance", c.gns.cg_tolerance},
            {"cg_max_iterations", c.gns.cg_max_iterations},
            {"max_iterations", c.gns.max_iterations},
            {"step_tolerance", c.gns.step_tolerance},
            {"warm_start", c.gns.warm_start},
            {"warm_start_radius", c.gns.warm_start_radius},
            {"threads", c.gns.threads}}}}},
        {"benchmark",
         {{"calibration_fraction", c.benchmark.calibration_fraction},
          {"timing_repetitions", c.benchmark.timing_repetitions},
          {"compute_bounds", c.benchmark.compute_bounds},
          {"detectors", c.benchmark.detectors}}}};
}

ToolkitConfig load_config(const std::filesystem::path& path, const ToolkitConfig& base) {
    return config_from_json(read_json_file(path), base);
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

} // namespace atomdet
