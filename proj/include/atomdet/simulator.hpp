#pragma once

#include "atomdet/image.hpp"
#include "atomdet/optics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace atomdet {

using CountImage = Image<std::uint16_t>;

struct FrameMetadata {
    std::string scene_id;
    double exposure = 0.0;  // seconds
    CameraModel camera;
    std::uint64_t seed = 0;
    std::size_t exposure_index = 0;
    std::size_t frame_index = 0;
};

/// Quantized camera frame. Ground truth is never stored here.
struct Frame {
    CountImage pixels;
    FrameMetadata metadata;
};

/// One draw of the camera model:
///   k ~ Poisson(lambda(x)), value = round(clamp(o + k/g + N(0, sigma^2), 0, max_count)).
/// Pixel p uses the random stream derive_seed(seed, p), so the result does not
/// depend on evaluation order.
Frame sample_frame(const Scene& scene, const CameraModel& camera, std::uint64_t seed);

/// i.i.d. Bernoulli(fill) occupancy.
Occupancy sample_occupancy(std::size_t n, double fill, std::uint64_t seed);

struct DatasetSpec {
    std::string name = "dataset";
    LatticeGeometry geometry;
    CameraModel camera;
    PsfModel psf;
    double rate = 2881.0;              // electrons / second / atom
    std::vector<double> exposures;     // seconds
    std::size_t frames_per_exposure = 0;
    double fill = 0.5;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

/// Frames are ordered by (exposure index, frame index); ground_truth[k] labels frames[k].
struct Dataset {
    DatasetSpec spec;
    std::vector<Frame> frames;
    std::vector<Occupancy> ground_truth;
};

/// "eEE_fFFFF" identifier used for frame files and estimate tables.
std::string frame_id(std::size_t exposure_index, std::size_t frame_index);

/// Seed of frame (exposure_index, frame_index) of a dataset seeded with `seed`.
std::uint64_t frame_seed(std::uint64_t seed, std::size_t exposure_index, std::size_t frame_index);

/// Regenerates a single frame and its occupancy exactly as generate_dataset would.
std::pair<Frame, Occupancy> generate_frame(const DatasetSpec& spec, const PointSpreadFunction& psf,
                                           std::size_t exposure_index, std::size_t frame_index);

Dataset generate_dataset(const DatasetSpec& spec);

/// Directory layout:
///   index.json                 dataset spec + frame list
///   frames/e{EE}_f{FFFF}.raw   little-endian uint16, row-major
///   frames/e{EE}_f{FFFF}.json  sidecar: geometry, camera, exposure, seed, occupancy
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

void write_raw_u16(const CountImage& image, const std::filesystem::path& path);
CountImage read_raw_u16(const std::filesystem::path& path, int width, int height);

} // namespace atomdet
