#include "atomdet/cramer_rao.hpp"
#include "atomdet/gaussian.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace atomdet;

namespace {

CameraModel camera() {
    CameraModel c;
    return c;
}

BoundSettings desk_settings() {
    BoundSettings s;
    s.psf_window = 41;
    return s;
}

BoundScenario custom(const LatticeGeometry& g, const PointSpreadFunction& psf, std::vector<double> gamma) {
    Occupancy occ(gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        occ[i] = gamma[i] > 0.0;
    }
    return {"custom", make_scene(g, psf, std::move(gamma), std::move(occ)), 0};
}

} // namespace

TEST(Scenarios, LabelsRoundTrip) {
    const auto labels = all_scenario_labels();
    ASSERT_EQ(labels.size(), 6u);
    for (const auto& l : labels) {
        const auto [occ, nb] = parse_scenario_label(l);
        EXPECT_EQ(scenario_label(occ, nb), l);
    }
    EXPECT_THROW(parse_scenario_label("occ-xx"), InvalidArgument);
}

TEST(Scenarios, DefaultLayout) {
    const BoundScenario s = make_bound_scenario(true, Neighborhood::all, 100.0, PsfModel{}, 2881.0);
    EXPECT_EQ(s.scene.geometry.image_width(), 101);
    EXPECT_EQ(s.scene.site_count(), 25u);
    EXPECT_EQ(s.site_under_study, 12u);
    EXPECT_EQ(s.scene.psf(12).window(), 81);
    EXPECT_NEAR(s.scene.exposure, 100.0 / 2881.0, 1e-15);
    const Occupancy some = some_neighbors_pattern(5);
    EXPECT_FALSE(some[12]);
    EXPECT_EQ(std::count(some.begin(), some.end(), true), 12);
}

TEST(Fisher, DisjointSupportsDecouple) {
    const LatticeGeometry g(1, 2, 20.0, 5.0, 5.0, 40, 11);
    const BoundScenario s = custom(g, build_gaussian_psf(5, 1.0), {30.0, 60.0});
    const FisherMatrix f = fisher_matrix(s, camera());
    EXPECT_EQ(f.entries(0, 1), 0.0);
    EXPECT_EQ(f.entries(1, 0), 0.0);
    EXPECT_GT(f.entries(0, 0), f.entries(1, 1));
}

TEST(Fisher, SymmetricPositiveSemiDefinite) {
    for (const auto& label : all_scenario_labels()) {
        const auto [occ, nb] = parse_scenario_label(label);
        const BoundScenario s = make_bound_scenario(occ, nb, 80.0, PsfModel{}, 2881.0, desk_settings());
        const Eigen::MatrixXd& m = fisher_matrix(s, camera()).entries;
        const double scale = m.cwiseAbs().maxCoeff();
        EXPECT_LE((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-10 * scale);
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
        EXPECT_GE(ev.minCoeff(), -1e-8 * ev.maxCoeff());
    }
}

TEST(Fisher, DeltaKernelPoissonBound) {
    CameraModel c;
    c.readout_sigma = 0.0;
    c.background = 0.01;
    c.background_rate = 0.0;
    const LatticeGeometry g(1, 1, 1.0, 2.0, 2.0, 5, 5);
    for (double gamma : {5.0, 100.0, 400.0}) {
        const BoundScenario s = custom(g, build_gaussian_psf(1, 1.0), {gamma});
        const double var = crb_variances(fisher_matrix(s, c)).at(0);
        EXPECT_NEAR(var, gamma, 0.01 * gamma);
    }
}

TEST(Fisher, ThreadCountDoesNotMatter) {
    const BoundScenario s = make_bound_scenario(true, Neighborhood::some, 120.0, PsfModel{}, 2881.0, desk_settings());
    const Eigen::MatrixXd a = fisher_matrix(s, camera(), 1e-8, 1).entries;
    const Eigen::MatrixXd b = fisher_matrix(s, camera(), 1e-8, 3).entries;
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-10 * a.cwiseAbs().maxCoeff());
}

TEST(Fisher, DarkPixelsAreSingular) {
    CameraModel c;
    c.background = 0.0;
    c.background_rate = 0.0;
    const BoundScenario s = make_bound_scenario(false, Neighborhood::none, 50.0, PsfModel{}, 2881.0, desk_settings());
    EXPECT_THROW(fisher_matrix(s, c), ModelError);
}

TEST(Crb, DiagonalInverse) {
    FisherMatrix f;
    f.entries = Eigen::Vector3d(2.0, 4.0, 0.5).asDiagonal();
    const auto v = crb_variances(f);
    EXPECT_DOUBLE_EQ(v[0], 0.5);
    EXPECT_DOUBLE_EQ(v[1], 0.25);
    EXPECT_DOUBLE_EQ(v[2], 2.0);
    f.entries = Eigen::Vector2d(1.0, 1e-13).asDiagonal();
    EXPECT_THROW(crb_variances(f), IllConditioned);
}

TEST(Crb, ScenarioOrderingAndMonotonicity) {
    const std::vector<double> gammas{30.0, 90.0, 180.0};
    const auto rows = bound_sweep(gammas, all_scenario_labels(), camera(), PsfModel{}, 2881.0, desk_settings());
    auto floor_of = [&](double g, const std::string& l) {
        for (const auto& r : rows) {
            if (r.gamma == g && r.scenario == l) {
                return r.variance_floor;
            }
        }
        ADD_FAILURE() << "missing " << l;
        return 0.0;
    };
    double prev = 0.0;
    for (double g : gammas) {
        for (const char* state : {"empty", "occ"}) {
            const std::string s(state);
            EXPECT_LE(floor_of(g, s + "-nn"), floor_of(g, s + "-sn"));
            EXPECT_LE(floor_of(g, s + "-sn"), floor_of(g, s + "-an"));
        }
        for (const char* nb : {"-nn", "-sn", "-an"}) {
            EXPECT_GT(floor_of(g, std::string("occ") + nb), floor_of(g, std::string("empty") + nb));
        }
        EXPECT_GE(floor_of(g, "occ-sn"), prev);
        prev = floor_of(g, "occ-sn");
    }
    for (const auto& r : rows) {
        EXPECT_GE(r.fn_floor, r.fp_floor);
        EXPECT_GE(r.fp_floor, 0.0);
        EXPECT_LE(r.fn_floor, 1.0);
    }
    EXPECT_THROW(bound_sweep(std::vector<double>{0.0}, all_scenario_labels(), camera(), PsfModel{}, 2881.0),
                 InvalidArgument);
}

TEST(ErrorRateFloor, EqualVariancesSplitTheGap) {
    const ErrorRateFloor f = error_rate_floor(50.0, 50.0, 80.0);
    EXPECT_NEAR(f.threshold, 40.0, 1e-12);
    EXPECT_NEAR(f.fp, f.fn, 1e-15);
    EXPECT_NEAR(f.fp, normal_sf(40.0, 0.0, 50.0), 1e-15);
}

TEST(ErrorRateFloor, WiderOccupiedClassHasMoreMisses) {
    for (double gamma : {10.0, 40.0, 100.0}) {
        const ErrorRateFloor f = error_rate_floor(0.5 * gamma + 10.0, 0.9 * gamma + 30.0, gamma);
        EXPECT_GT(f.fn, f.fp);
        EXPECT_GT(f.threshold, 0.0);
        EXPECT_LT(f.threshold, gamma);
    }
}

TEST(ErrorRateFloor, ReferenceValues) {
    // Independent oracle (scipy brentq on the log-density difference).
    const ErrorRateFloor f = error_rate_floor(200.0, 290.5, 100.0);
    EXPECT_NEAR(f.threshold, 45.79692498, 1e-6);
    EXPECT_NEAR(f.fn, 7.35933700e-4, 1e-10);
    EXPECT_NEAR(f.fp, 6.01154838e-4, 1e-10);
}

TEST(FnRateFit, ClosedForm) {
    for (double x : {1.0, 20.0, 100.0, 150.0}) {
        const double t = 0.391 * std::pow(x, 0.951) + 2.160;
        const double v = 4.183 * std::pow(x, 0.896) + 31.618;
        EXPECT_NEAR(fitted_threshold(x), t, 1e-12);
        EXPECT_NEAR(fitted_variance(x), v, 1e-12);
        EXPECT_NEAR(fn_rate_fit(x), normal_cdf((t - x) / std::sqrt(v)), 1e-12);
    }
    EXPECT_NEAR(fn_rate_fit(100.0), 4.6488387e-5, 1e-11);
    // Near zero the fitted threshold offset dominates.
    EXPECT_NEAR(fn_rate_fit(1e-9), 0.64956168, 1e-6);
    double prev = 1.0;
    for (double x = 5.0; x <= 150.0; x += 5.0) {
        EXPECT_LT(fn_rate_fit(x), prev);
        prev = fn_rate_fit(x);
    }
}

TEST(PowerLaw, RecoversExactData) {
    std::vector<double> k, v;
    for (int i = 1; i <= 10; ++i) {
        k.push_back(10.0 * i);
        v.push_back(2.0 * 10.0 * i + 3.0);
    }
    const PowerLawFit f = power_law_fit(k, v);
    EXPECT_NEAR(f.a, 2.0, 1e-6);
    EXPECT_NEAR(f.b, 1.0, 1e-6);
    EXPECT_NEAR(f.c, 3.0, 1e-6);
    EXPECT_FALSE(f.degenerate);
    EXPECT_NEAR(f(50.0), 103.0, 1e-6);
}

TEST(PowerLaw, CurvedData) {
    std::vector<double> k, v;
    for (double x : {14.4, 28.8, 57.6, 86.4, 115.2, 172.9, 230.5}) {
        k.push_back(x);
        v.push_back(0.391 * std::pow(x, 0.951) + 2.160);
    }
    const PowerLawFit f = power_law_fit(k, v);
    EXPECT_NEAR(f.b, 0.951, 1e-5);
    EXPECT_NEAR(f.a, 0.391, 1e-5);
    EXPECT_NEAR(f.c, 2.160, 1e-4);
}

TEST(PowerLaw, ConstantDataIsDegenerate) {
    const std::vector<double> k{1, 2, 3, 4, 5}, v(5, 7.5);
    const PowerLawFit f = power_law_fit(k, v);
    EXPECT_TRUE(f.degenerate);
    EXPECT_NEAR(f.a, 0.0, 1e-12);
    EXPECT_NEAR(f.c, 7.5, 1e-12);
}

TEST(PowerLaw, BoundaryOptimumReportsBestIterate) {
    std::vector<double> k, v;
    for (int i = 1; i <= 6; ++i) {
        k.push_back(i);
        v.push_back(std::pow(i, 6.0));
    }
    try {
        power_law_fit(k, v, -3.0, 4.0);
        FAIL() << "expected PowerLawFitError";
    } catch (const PowerLawFitError& e) {
        EXPECT_NEAR(e.best().b, 4.0, 1e-9);
    }
}

TEST(PowerLaw, RejectsBadInput) {
    const std::vector<double> k{1, 2, 3}, v{1, 2, 3};
    EXPECT_THROW(power_law_fit(k, v), InvalidArgument);
    const std::vector<double> k2{0, 1, 2, 3}, v2{1, 2, 3, 4};
    EXPECT_THROW(power_law_fit(k2, v2), InvalidArgument);
}
