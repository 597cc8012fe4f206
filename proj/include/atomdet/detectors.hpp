#pragma once

#include "atomdet/error.hpp"
#include "atomdet/image.hpp"
#include "atomdet/optics.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace atomdet {

/// Per-site photoelectron estimates of one frame.
struct EstimateSet {
    std::string detector;            // "roi", "wiener", "rl", "gns"
    std::string params;              // e.g. "radius=5"
    std::vector<double> estimates;   // electrons, one per site
    std::vector<bool> near_border;   // readout clipped by, or PSF within reach of, the frame edge
    double wall_seconds = 0.0;
};

/// Sum of (pixel - o) * g over the disc of `radius` around each site. Discs are
/// clipped at the frame edge (only in-frame pixels count) and flagged.
EstimateSet roi_sum(const ImageD& frame, const LatticeGeometry& geometry, double radius,
                    const CameraModel& camera);

/// Number of integer offsets (dx, dy) with dx^2 + dy^2 <= radius^2.
int disc_size(double radius);

/// Cyclic Wiener filter conj(H) Y / (|H|^2 + balance * S), S = 1 except S(DC) = 0.
ImageD wiener_deconvolve(const ImageD& frame, const PointSpreadFunction& psf, double balance);

/// Multiplicative Richardson-Lucy on max(frame - o, 1e-6), started from that image.
/// `on_iteration` (optional) sees the estimate after every update.
ImageD richardson_lucy(const ImageD& frame, const PointSpreadFunction& psf, int iterations,
                       const CameraModel& camera,
                       const std::function<void(int, const ImageD&)>& on_iteration = {});

/// Sum of an offset-free deconvolved image over the disc of `read_radius` around each
/// site, times g. Sites within `border_margin` pixels of the frame edge are flagged.
EstimateSet deconvolution_readout(const ImageD& image, const LatticeGeometry& geometry,
                                  double read_radius, const CameraModel& camera,
                                  int border_margin = 0);

struct GnsOptions {
    int psf_window = 41;            // PSF crop, odd; 0 keeps the full kernel
    int tile_size = 0;              // pixels per tile side; 0 solves the frame at once
    int refresh_every = 3;          // iterations between J^T W J reassemblies
    double cg_tolerance = 1e-8;     // relative residual of the inner solve
    int cg_max_iterations = 0;      // 0: 10 * unknowns
    int max_iterations = 50;
    double step_tolerance = 1e-3;   // max |delta beta| at which to stop
    bool warm_start = true;         // start from roi_sum
    double warm_start_radius = 5.0;
    double background = 0.0;        // b in electrons per pixel, known from the camera model
    unsigned threads = 1;           // tiles solved in parallel

    std::string describe() const;
};

/// beta = (gamma_1..gamma_n in electrons, o in counts).
struct SolverState {
    Eigen::VectorXd beta;
    int iterations = 0;
    std::vector<double> objective_start; // weighted objective before each step
    std::vector<double> objective;       // same frozen weights, after the accepted step
    std::vector<double> residual_norm;   // unweighted ||model - frame|| after each step
    std::vector<int> cg_iterations;
    int refreshes = 0;                   // J^T W J assemblies
    bool converged = false;

    std::size_t site_count() const { return beta.size() > 0 ? beta.size() - 1 : 0; }
    double offset() const { return beta(beta.size() - 1); }
};

struct GnsResult {
    EstimateSet estimates;
    SolverState state;  // for tiled solves: the state of the first tile, offset = tile mean
};

/// Weighted Gauss-Newton fit of mu(x) = o + (b + sum_i PSF_i(x) gamma_i) / g with weights
/// 1 / (sigma^2 + lambda(x) / g^2). `psfs` holds one shared kernel or one per site.
/// Negative gamma estimates are returned unclamped.
GnsResult gauss_newton_solve(const ImageD& frame, const LatticeGeometry& geometry,
                             std::span<const PointSpreadFunction> psfs, const CameraModel& camera,
                             const GnsOptions& options = {});

/// Jacobi-preconditioned conjugate gradient on an SPD system.
struct CgReport {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;  // ||r_k|| / ||b||
    std::vector<double> energy_history;    // ||x* - x_k||_A^2 - ||x*||_A^2 = x'Ax - 2x'b
};

template <typename Matrix>
CgReport conjugate_gradient(const Matrix& a, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                            double tolerance, int max_iterations) {
    CgReport rep;
    const Eigen::Index n = b.size();
    x.setZero(n);
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        rep.converged = true;
        return rep;
    }
    Eigen::VectorXd inv_diag(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = a.coeff(i, i);
        inv_diag(i) = d > 0.0 ? 1.0 / d : 1.0;
    }
    Eigen::VectorXd r = b;
    Eigen::VectorXd z = inv_diag.cwiseProduct(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    Eigen::VectorXd ap(n);
    for (int k = 0; k < max_iterations; ++k) {
        ap.noalias() = a * p;
        const double pap = p.dot(ap);
        if (!(pap > 0.0)) {
            throw ConvergenceError("conjugate gradient: matrix is not positive definite (p'Ap = " +
                                   std::to_string(pap) + " at iteration " + std::to_string(k) + ")");
        }
        const double alpha = rz / pap;
        x += alpha * p;
        r -= alpha * ap;
        ++rep.iterations;
        rep.relative_residual = r.norm() / bnorm;
        rep.residual_history.push_back(rep.relative_residual);
        // x'Ax - 2x'b = -x'(b + r) since Ax = b - r.
        rep.energy_history.push_back(-x.dot(b + r));
        if (rep.relative_residual <= tolerance) {
            rep.converged = true;
            return rep;
        }
        z = inv_diag.cwiseProduct(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    return rep;
}

enum class Algorithm { roi, wiener, rl, gns };

std::string to_string(Algorithm algo);
Algorithm algorithm_from_string(const std::string& name);

/// A detector with all of its parameters.
struct DetectorConfig {
    Algorithm algo = Algorithm::roi;
    double radius = 5.0;        // roi
    double balance = 10.0;      // wiener
    int iterations = 2;         // rl
    double read_radius = 1.0;   // wiener, rl
    GnsOptions gns;

    /// Canonical "k=v,..." form of the parameters that apply to `algo`.
    std::string params() const;
    std::string label() const { return to_string(algo) + "[" + params() + "]"; }
};

/// Parses "k=v,k=v" on top of the defaults. Unknown keys raise InvalidArgument.
DetectorConfig parse_detector(const std::string& algo, const std::string& params,
                              DetectorConfig defaults = {});

/// What a detector may know about a frame: the lattice, the PSF(s), the camera and
/// the exposure (which fixes the background b). No ground truth.
struct DetectorContext {
    LatticeGeometry geometry;
    std::vector<PointSpreadFunction> psfs;
    CameraModel camera;
    double exposure = 0.0;
};

/// Runs one detector on one frame (counts) and records its wall time.
EstimateSet run_detector(const DetectorConfig& config, const ImageD& frame,
                         const DetectorContext& context);

} // namespace atomdet
