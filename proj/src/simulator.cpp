#include "atomdet/simulator.hpp"

#include "atomdet/config.hpp"
#include "atomdet/error.hpp"
#include "atomdet/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

namespace atomdet {

namespace {

constexpr std::uint64_t kOccupancyStream = 0xFFFF'FFFF'0000'0001ULL;

std::uint16_t quantize(double value, int max_count) {
    const double clamped = std::clamp(value, 0.0, static_cast<double>(max_count));
    return static_cast<std::uint16_t>(std::round(clamped));
}

} // namespace

std::string frame_id(std::size_t exposure_index, std::size_t frame_index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "e%02zu_f%04zu", exposure_index, frame_index);
    return buf;
}

Frame sample_frame(const Scene& scene, const CameraModel& camera, std::uint64_t seed) {
    camera.validate();
    scene.validate();
    if (camera.max_count > 65535) {
        throw InvalidArgument("frames are stored as 16-bit; max_count must be <= 65535");
    }
    const ImageD lambda = expected_electron_map(scene, camera);
    Frame frame;
    frame.pixels = CountImage(lambda.width(), lambda.height());
    frame.metadata.exposure = scene.exposure;
    frame.metadata.camera = camera;
    frame.metadata.seed = seed;

    const auto lam = lambda.pixels();
    auto out = frame.pixels.pixels();
    std::normal_distribution<double> readout(0.0, 1.0);
    for (std::size_t p = 0; p < lam.size(); ++p) {
        Xoshiro256 engine(derive_seed(seed, p));
        long k = 0;
        if (lam[p] > 0.0) {
            std::poisson_distribution<long> shot(lam[p]);
            k = shot(engine);
        }
        double value = camera.offset + static_cast<double>(k) / camera.gain;
        if (camera.readout_sigma > 0.0) {
            value += camera.readout_sigma * readout(engine);
            readout.reset();
        }
        out[p] = quantize(value, camera.max_count);
    }
    return frame;
}

Occupancy sample_occupancy(std::size_t n, double fill, std::uint64_t seed) {
    if (!(fill >= 0.0 && fill <= 1.0)) {
        throw InvalidArgument("fill must lie in [0, 1]");
    }
    Xoshiro256 engine(seed);
    Occupancy occ(n);
    for (std::size_t i = 0; i < n; ++i) {
        occ[i] = engine.uniform() < fill;
    }
    return occ;
}

std::uint64_t frame_seed(std::uint64_t seed, std::size_t exposure_index, std::size_t frame_index) {
    return derive_seed(derive_seed(seed, exposure_index), frame_index);
}

std::pair<Frame, Occupancy> generate_frame(const DatasetSpec& spec, const PointSpreadFunction& psf,
                                           std::size_t exposure_index, std::size_t frame_index) {
    const double exposure = spec.exposures.at(exposure_index);
    const std::uint64_t fseed = frame_seed(spec.seed, exposure_index, frame_index);
    Occupancy occ = sample_occupancy(spec.geometry.site_count(), spec.fill,
                                     derive_seed(fseed, kOccupancyStream));
    std::vector<double> gamma = gamma_from_exposure(occ, spec.rate, exposure);

    Scene scene;
    scene.geometry = spec.geometry;
    scene.psfs = {psf};
    scene.gamma = std::move(gamma);
    scene.occupancy = occ;
    scene.exposure = exposure;

    Frame frame = sample_frame(scene, spec.camera, fseed);
    frame.metadata.scene_id = spec.name + "/" + frame_id(exposure_index, frame_index);
    frame.metadata.exposure_index = exposure_index;
    frame.metadata.frame_index = frame_index;
    return {std::move(frame), std::move(occ)};
}

Dataset generate_dataset(const DatasetSpec& spec) {
    if (spec.exposures.empty()) {
        throw InvalidArgument("dataset needs at least one exposure");
    }
    if (!spec.geometry.pixel_aligned()) {
        throw InvalidArgument("dataset generation requires a pixel-aligned lattice");
    }
    spec.camera.validate();
    const PointSpreadFunction psf = build_psf(spec.psf);

    Dataset ds;
    ds.spec = spec;
    const std::size_t total = spec.exposures.size() * spec.frames_per_exposure;
    ds.frames.resize(total);
    ds.ground_truth.resize(total);

    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t k = begin; k < total; k += stride) {
            auto [frame, occ] = generate_frame(spec, psf, k / spec.frames_per_exposure,
                                               k % spec.frames_per_exposure);
            ds.frames[k] = std::move(frame);
            ds.ground_truth[k] = std::move(occ);
        }
    };
    const unsigned workers = std::max(1u, static_cast<unsigned>(std::min<std::size_t>(spec.threads, total)));
    if (workers <= 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(work, w, workers);
        }
    }
    return ds;
}

void write_raw_u16(const CountImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write frame " + path.string());
    }
    std::vector<unsigned char> bytes(image.size() * 2);
    const auto px = image.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        bytes[2 * i] = static_cast<unsigned char>(px[i] & 0xFF);
        bytes[2 * i + 1] = static_cast<unsigned char>(px[i] >> 8);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for frame " + path.string());
    }
}

CountImage read_raw_u16(const std::filesystem::path& path, int width, int height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open frame " + path.string());
    }
    CountImage image(width, height);
    std::vector<unsigned char> bytes(image.size() * 2);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
        throw IoError("frame " + path.string() + " is truncated (expected " +
                      std::to_string(bytes.size()) + " bytes)");
    }
    auto px = image.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
    return image;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir / "frames", ec);
    if (ec) {
        throw IoError("cannot create " + (dir / "frames").string() + ": " + ec.message());
    }
    Json index = to_json(ds.spec);
    index["frames"] = Json::array();
    for (std::size_t k = 0; k < ds.frames.size(); ++k) {
        const Frame& f = ds.frames[k];
        const std::string stem = frame_id(f.metadata.exposure_index, f.metadata.frame_index);
        write_raw_u16(f.pixels, dir / "frames" / (stem + ".raw"));

        std::vector<int> occ(ds.ground_truth[k].begin(), ds.ground_truth[k].end());
        Json sidecar{{"scene_id", f.metadata.scene_id},
                     {"exposure", f.metadata.exposure},
                     {"exposure_index", f.metadata.exposure_index},
                     {"frame_index", f.metadata.frame_index},
                     {"seed", f.metadata.seed},
                     {"width", f.pixels.width()},
                     {"height", f.pixels.height()},
                     {"lattice", to_json(ds.spec.geometry)},
                     {"camera", to_json(f.metadata.camera)},
                     {"psf", to_json(ds.spec.psf)},
                     {"occupancy", occ}};
        write_json_file(sidecar, dir / "frames" / (stem + ".json"));
        index["frames"].push_back({{"raw", "frames/" + stem + ".raw"},
                                   {"meta", "frames/" + stem + ".json"},
                                   {"exposure_index", f.metadata.exposure_index},
                                   {"frame_index", f.metadata.frame_index}});
    }
    write_json_file(index, dir / "index.json");
}

Dataset read_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "index.json")) {
        throw IoError("no dataset at " + dir.string() + " (missing index.json; run `simulate` first)");
    }
    const Json index = read_json_file(dir / "index.json");
    Dataset ds;
    ds.spec = dataset_spec_from_json(index);
    for (const Json& entry : index.at("frames")) {
        const Json meta = read_json_file(dir / entry.at("meta").get<std::string>());
        Frame f;
        f.pixels = read_raw_u16(dir / entry.at("raw").get<std::string>(), meta.at("width").get<int>(),
                                meta.at("height").get<int>());
        f.metadata.scene_id = meta.at("scene_id").get<std::string>();
        f.metadata.exposure = meta.at("exposure").get<double>();
        f.metadata.exposure_index = meta.at("exposure_index").get<std::size_t>();
        f.metadata.frame_index = meta.at("frame_index").get<std::size_t>();
        f.metadata.seed = meta.at("seed").get<std::uint64_t>();
        f.metadata.camera = camera_from_json(meta.at("camera"));
        const auto occ = meta.at("occupancy").get<std::vector<int>>();
        ds.ground_truth.emplace_back(occ.begin(), occ.end());
        ds.frames.push_back(std::move(f));
    }
    return ds;
}

} // namespace atomdet
