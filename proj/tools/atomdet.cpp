#include "atomdet/benchmark.hpp"
#include "atomdet/config.hpp"
#include "atomdet/cramer_rao.hpp"
#include "atomdet/detectors.hpp"
#include "atomdet/simulator.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace atomdet;

namespace {

ToolkitConfig resolve_config(const std::string& path, const std::string& preset) {
    ToolkitConfig base = preset_config(preset.empty() ? "desk" : preset);
    return path.empty() ? base : load_config(path, base);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void progress(const std::string& msg) { std::cerr << msg << '\n'; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Atom-detection toolkit: simulate lattice images, compute detection bounds, run and benchmark detectors"};
    app.require_subcommand(1);

    std::string config_path, preset, out;

    auto* simulate = app.add_subcommand("simulate", "Generate a labeled dataset of camera frames");
    std::uint64_t seed = 0;
    simulate->add_option("--config", config_path, "JSON config (missing keys keep preset defaults)")
        ->check(CLI::ExistingFile);
    simulate->add_option("--out", out, "Output dataset directory")->required();
    simulate->add_option("--seed", seed, "Override the simulation seed");
    simulate->add_option("--preset", preset, "Base preset")->check(CLI::IsMember({"desk", "paper"}));

    auto* bound = app.add_subcommand("bound", "Cramer-Rao variance and error-rate floors");
    std::string scenarios = "all", gammas = "auto";
    bound->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
    bound->add_option("--scenarios", scenarios,
                      "all, or a comma list of empty-nn,empty-sn,empty-an,occ-nn,occ-sn,occ-an");
    bound->add_option("--gammas", gammas, "Comma list of photoelectron counts, or auto (rate x exposures)");
    bound->add_option("--out", out, "Output CSV")->required();
    bound->add_option("--preset", preset, "Base preset")->check(CLI::IsMember({"desk", "paper"}));

    auto* detect = app.add_subcommand("detect", "Run one detector over a dataset");
    std::string dataset_dir, algo, params;
    detect->add_option("--dataset", dataset_dir, "Dataset directory written by simulate")
        ->required()
        ->check(CLI::ExistingDirectory);
    detect->add_option("--algo", algo, "Detector")->required()->check(
        CLI::IsMember({"roi", "wiener", "rl", "gns"}));
    detect->add_option("--params", params, "Detector parameters k=v,...");
    detect->add_option("--out", out, "Output estimates CSV")->required();

    auto* bench = app.add_subcommand("bench", "Benchmark detectors against the bounds");
    std::string detectors;
    bool write_estimates = false;
    bench->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
    bench->add_option("--out", out, "Output directory")->required();
    bench->add_option("--preset", preset, "Base preset")->check(CLI::IsMember({"desk", "paper"}));
    bench->add_option("--detectors", detectors, "Comma list of roi,wiener,rl,gns");
    bench->add_option("--dataset", dataset_dir, "Use an existing dataset instead of generating one")
        ->check(CLI::ExistingDirectory);
    bench->add_flag("--estimates", write_estimates, "Also write per-detector estimate tables");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) {
            ToolkitConfig cfg = resolve_config(config_path, preset);
            if (simulate->count("--seed") > 0) {
                cfg.dataset.seed = seed;
            }
            const Dataset ds = generate_dataset(cfg.dataset);
            write_dataset(ds, out);
            write_json_file(to_json(cfg), std::filesystem::path(out) / "config.json");
            write_psf(build_psf(cfg.dataset.psf), std::filesystem::path(out) / "psf.bin");
            std::cout << "wrote " << ds.frames.size() << " frames to " << out << '\n';
        } else if (*bound) {
            const ToolkitConfig cfg = resolve_config(config_path, preset);
            std::vector<std::string> labels =
                scenarios == "all" ? all_scenario_labels() : split(scenarios, ',');
            for (const auto& l : labels) {
                parse_scenario_label(l);
            }
            std::vector<double> grid;
            if (gammas == "auto") {
                for (double t : cfg.dataset.exposures) {
                    grid.push_back(cfg.dataset.rate * t);
                }
            } else {
                for (const auto& g : split(gammas, ',')) {
                    grid.push_back(std::stod(g));
                }
            }
            const auto rows = bound_sweep(grid, labels, cfg.dataset.camera, cfg.dataset.psf,
                                          cfg.dataset.rate, cfg.bound);
            write_bounds_csv(rows, out);
            std::cout << "wrote " << rows.size() << " rows to " << out << '\n';
            if (cfg.bound.full_diagonal) {
                std::filesystem::path sites_path(out);
                sites_path.replace_filename(sites_path.stem().string() + "_sites.csv");
                std::ofstream sites(sites_path);
                sites << std::setprecision(10) << "gamma,scenario,site,variance_floor\n";
                for (double g : grid) {
                    for (const auto& l : labels) {
                        const auto [occupied, nb] = parse_scenario_label(l);
                        const BoundScenario sc = make_bound_scenario(occupied, nb, g, cfg.dataset.psf,
                                                                     cfg.dataset.rate, cfg.bound);
                        const auto var = crb_variances(
                            fisher_matrix(sc, cfg.dataset.camera, cfg.bound.epsilon, cfg.bound.threads));
                        for (std::size_t i = 0; i < var.size(); ++i) {
                            sites << g << ',' << l << ',' << i << ',' << var[i] << '\n';
                        }
                    }
                }
                std::cout << "wrote per-site floors to " << sites_path.string() << '\n';
            }
        } else if (*detect) {
            const Dataset ds = read_dataset(dataset_dir);
            const DetectorConfig det = parse_detector(algo, params);
            DetectorContext ctx;
            ctx.geometry = ds.spec.geometry;
            ctx.psfs = dataset_psfs(ds.spec);
            ctx.camera = ds.spec.camera;
            std::vector<EstimateRecord> rows;
            for (std::size_t k = 0; k < ds.frames.size(); ++k) {
                const Frame& f = ds.frames[k];
                ctx.exposure = f.metadata.exposure;
                const EstimateSet est = run_detector(det, f.pixels.cast<double>(), ctx);
                const std::string id = frame_id(f.metadata.exposure_index, f.metadata.frame_index);
                for (std::size_t i = 0; i < est.estimates.size(); ++i) {
                    rows.push_back({id, i, est.estimates[i], static_cast<bool>(ds.ground_truth[k][i]),
                                    est.wall_seconds * 1e3, est.near_border[i]});
                }
            }
            write_estimates_csv(rows, out);
            std::cout << "wrote " << rows.size() << " estimates (" << det.label() << ") to " << out << '\n';
        } else if (*bench) {
            const ToolkitConfig cfg = resolve_config(config_path, preset);
            BenchmarkOptions opts;
            opts.detectors = split(detectors, ',');
            opts.write_estimates = write_estimates;
            opts.progress = progress;
            const BenchmarkResult r = dataset_dir.empty()
                                          ? run_benchmark(cfg, out, opts)
                                          : run_benchmark(cfg, read_dataset(dataset_dir), out, opts);
            std::cout << "wrote " << r.metrics.size() << " metric rows and " << r.bounds.size()
                      << " bound rows to " << out << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
