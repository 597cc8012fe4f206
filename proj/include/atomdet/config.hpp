#pragma once

#include "atomdet/cramer_rao.hpp"
#include "atomdet/detectors.hpp"
#include "atomdet/optics.hpp"
#include "atomdet/simulator.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace atomdet {

using Json = nlohmann::json;

Json to_json(const LatticeGeometry& geometry);
LatticeGeometry lattice_from_json(const Json& j);

Json to_json(const CameraModel& camera);
CameraModel camera_from_json(const Json& j, const CameraModel& defaults = {});

Json to_json(const PsfModel& psf);
PsfModel psf_from_json(const Json& j, const PsfModel& defaults = {});

Json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const Json& j);

struct RoiSettings {
    std::vector<double> radii{5.0};
};

struct WienerSettings {
    std::vector<double> balances{10.0};
    double read_radius = 1.0;
};

struct RlSettings {
    std::vector<int> iterations{2};
    double read_radius = 1.0;
};

using GnsSettings = GnsOptions;

struct BenchmarkSettings {
    double calibration_fraction = 0.2;
    int timing_repetitions = 3;
    bool compute_bounds = true;
    std::vector<std::string> detectors{"roi", "wiener", "rl", "gns"};
};

/// Everything the CLI reads from a config file. Missing keys keep these defaults.
struct ToolkitConfig {
    DatasetSpec dataset;
    BoundSettings bound;
    RoiSettings roi;
    WienerSettings wiener;
    RlSettings rl;
    GnsSettings gns;
    BenchmarkSettings benchmark;
};

/// "desk": 256x256 px, 10x10 sites, 20 frames per exposure, 6 exposures.
/// "paper": 1024x1024 px, 40x40 sites, 100 frames per exposure, 12 exposures (5..80 ms).
ToolkitConfig preset_config(const std::string& preset);

/// Applies the keys present in `j` on top of `base`.
ToolkitConfig config_from_json(const Json& j, ToolkitConfig base = preset_config("desk"));
Json to_json(const ToolkitConfig& config);

ToolkitConfig load_config(const std::filesystem::path& path,
                          const ToolkitConfig& base = preset_config("desk"));

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& j, const std::filesystem::path& path);

} // namespace atomdet
