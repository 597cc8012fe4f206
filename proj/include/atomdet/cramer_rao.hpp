#pragma once

#include "atomdet/error.hpp"
#include "atomdet/optics.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace atomdet {

enum class Neighborhood { none, some, all };

/// Layout of the bound computation: a small padded lattice whose central site is studied.
struct BoundSettings {
    int image_size = 101;
    int sites = 5;          // sites per side
    double spacing = 20.0;
    int psf_window = 81;
    double epsilon = 1e-8;
    bool full_diagonal = false;  // CLI also writes every site's floor
    unsigned threads = 1;
};

struct BoundScenario {
    std::string label;  // e.g. "occ-sn", or "custom"
    Scene scene;
    std::size_t site_under_study = 0;
};

/// "empty-nn", "empty-sn", "empty-an", "occ-nn", "occ-sn", "occ-an".
std::string scenario_label(bool occupied, Neighborhood neighborhood);
std::vector<std::string> all_scenario_labels();
std::pair<bool, Neighborhood> parse_scenario_label(const std::string& label);

/// Neighbor occupancy of the half-filled ("some neighbors") case; the central
/// entry is left empty.
Occupancy some_neighbors_pattern(int sites_per_side);

/// Standard scenario: every occupied site emits `gamma` electrons and the
/// frame's exposure is gamma / rate (so b follows the exposure).
BoundScenario make_bound_scenario(bool occupied, Neighborhood neighborhood, double gamma,
                                  const PsfModel& psf, double rate,
                                  const BoundSettings& settings = {});

/// Arbitrary occupancy on the bound layout; `site_under_study` defaults to the center.
BoundScenario make_custom_scenario(const Occupancy& occupancy, double gamma, const PsfModel& psf,
                                   double rate, const BoundSettings& settings = {});

struct FisherMatrix {
    Eigen::MatrixXd entries;  // 1 / electrons^2
    std::string label;
};

/// [I]_ij = sum_x PSF_i(x) PSF_j(x) * integral (dp/dlambda)^2 / p dq.
/// Throws ModelError naming the pixel when lambda = 0 where some PSF is nonzero.
FisherMatrix fisher_matrix(const BoundScenario& scenario, const CameraModel& camera,
                           double epsilon = 1e-8, unsigned threads = 1);

/// Diagonal of the inverse Fisher matrix. Throws IllConditioned when the
/// condition number exceeds 1e12.
std::vector<double> crb_variances(const FisherMatrix& fisher);

struct ErrorRateFloor {
    double threshold = 0.0;
    double fp = 0.0;
    double fn = 0.0;
    bool fallback = false;  // no density crossing in (0, gamma); midpoint used
};

/// Estimator outputs modeled as N(0, var_empty) and N(gamma, var_occupied); the
/// threshold sits where the two densities cross.
ErrorRateFloor error_rate_floor(double var_empty, double var_occupied, double gamma);

/// Closed-form false-negative estimate for the some-neighbors case from the fitted
/// threshold 0.391 x^0.951 + 2.160 and variance 4.183 x^0.896 + 31.618:
///   P(FN) = (1 + erf((t(x) - x) / sqrt(2 v(x)))) / 2.
double fn_rate_fit(double x);
double fitted_threshold(double x);
double fitted_variance(double x);

struct PowerLawFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double residual_norm = 0.0;
    bool degenerate = false;  // amplitude ~ 0: exponent is not identifiable

    double operator()(double k) const;
};

/// Least-squares fit of a * k^b + c (variable projection: a, c solved linearly for
/// each b; b located by bracketing scan + golden section). Throws ConvergenceError
/// (carrying the best iterate) if the optimum sits on the exponent search boundary.
PowerLawFit power_law_fit(std::span<const double> k, std::span<const double> values,
                          double b_min = -3.0, double b_max = 4.0);

/// Raised by power_law_fit; carries the best iterate found.
class PowerLawFitError : public ConvergenceError {
public:
    PowerLawFitError(const std::string& what, PowerLawFit best)
        : ConvergenceError(what), best_(best) {}
    const PowerLawFit& best() const noexcept { return best_; }

private:
    PowerLawFit best_;
};

/// One line of bounds.csv.
struct BoundRow {
    double gamma = 0.0;
    std::string scenario;
    double variance_floor = 0.0;
    double threshold = 0.0;
    double fp_floor = 0.0;
    double fn_floor = 0.0;
};

/// Variance and error-rate floors of the central site for each gamma and scenario.
/// Empty and occupied variants of a neighborhood share their threshold / FP / FN.
std::vector<BoundRow> bound_sweep(std::span<const double> gammas,
                                  std::span<const std::string> scenarios,
                                  const CameraModel& camera, const PsfModel& psf, double rate,
                                  const BoundSettings& settings = {});

void write_bounds_csv(std::span<const BoundRow> rows, const std::filesystem::path& path);

} // namespace atomdet
