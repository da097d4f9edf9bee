#include <gtest/gtest.h>

#include "wlab/continuation.hpp"

using namespace wlab;

namespace {
const QuadratureGrid& grid() {
    static const QuadratureGrid g = build_grid(16);
    return g;
}
const SpectralSpace& space() {
    static const SpectralSpace sp = make_spectral_space(grid(), 3, 3, 8);
    return sp;
}
ViscousState state(double sigma, double ws) {
    ViscousState s;
    s.sigma = sigma;
    s.Wsigma = ws;
    return s;
}
}  // namespace

TEST(Viscosity, SigmaDomain) {
    EXPECT_THROW(check_sigma(0.0), ConfigError);
    EXPECT_THROW(check_sigma(std::exp(-2.0)), ConfigError);
    EXPECT_NO_THROW(check_sigma(0.1));
    EXPECT_EQ(onofri_weight(0.0), 0.0);
    EXPECT_NEAR(onofri_weight(0.01), 1 / std::log(100.0), 1e-15);
    EXPECT_NEAR(w_sigma_combine(1, 2, 3, 0.1), 1 + 0.02 + 3 / std::log(10.0), 1e-15);
}

TEST(Viscosity, ScheduleValidation) {
    EXPECT_NO_THROW(SigmaSchedule::uniform({0.05, 0.02, 0.01}).validate());
    EXPECT_THROW(SigmaSchedule::uniform({0.02, 0.05}).validate(), ConfigError);
    EXPECT_THROW(SigmaSchedule::uniform({0.05, 0.05}).validate(), ConfigError);
    EXPECT_THROW(SigmaSchedule::uniform({}).validate(), ConfigError);
    EXPECT_THROW(SigmaSchedule::uniform({0.5}).validate(), ConfigError);
}

TEST(Viscosity, NormalDerivativeMatchesOracle) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.3"), grid());
    UniformizeOptions u;
    u.band_limit = 8;
    auto ev = w_sigma_eval(im, 0.05, u);
    EXPECT_TRUE(ev.has_onofri);
    auto w = harmonic_probe(im, 2, 0, 2);
    EnergyFn E = [&](const Immersion& x) {
        Immersion y = x;
        y.modified = true;
        UniformizeOptions o = u;
        o.method = UniformizeOptions::Method::Newton;
        return w_sigma_eval(y, 0.05, o).value;
    };
    EXPECT_LT(rel_error(d_w_sigma(im, ev, w), fd_oracle(E, im, w, 1).value), 1e-5);
}

TEST(Viscosity, CoefficientGradientMatchesDirectionalDifference) {
    const auto& sp = space();
    auto coef = to_coefficients(sp, make_test_surface("perturbed_sphere:2,0,0.1"));
    double sigma = 0.05;
    auto im = spectral_immersion(sp, coef);
    auto ev = w_sigma_eval(im, sigma, sp.uopt);
    Eigen::MatrixXd g = coefficient_gradient(sp, im, ev);
    Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(coef.rows(), coef.cols());
    dir(sh_index(2, 0), 2) = 1.0;
    dir(sh_index(3, 1), 0) = 0.5;
    auto f = [&](double t) { return w_sigma(spectral_immersion(sp, coef + t * dir), sigma, sp.uopt); };
    auto fd = fd_derivative(f, 1, 1e-3);
    double analytic = (g.array() * dir.array()).sum();
    EXPECT_LT(rel_error(analytic, fd.value), 1e-5);
}

TEST(Viscosity, MinimizationDecreasesEnergyTowardRound) {
    const auto& sp = space();
    auto coef = to_coefficients(sp, make_test_surface("perturbed_sphere:2,0,0.1"));
    auto s0 = evaluate_state(sp, coef, 0.05);
    auto s = minimize_w_sigma(sp, coef, 0.05, {1e-6, 100});
    EXPECT_LT(s.Wsigma, s0.Wsigma);
    for (std::size_t k = 1; k < s.energy_trace.size(); ++k) EXPECT_LE(s.energy_trace[k], s.energy_trace[k - 1] + 1e-12);
    EXPECT_NEAR(s.W, 4 * kPi, 1e-2);
    EXPECT_EQ(s.status, "converged");
}

TEST(Viscosity, CriticalStartReturnsImmediately) {
    const auto& sp = space();
    auto coef = to_coefficients(sp, make_test_surface("round:1"));
    auto s = minimize_w_sigma(sp, coef, 0.05);
    EXPECT_EQ(s.iterations, 0);
    EXPECT_EQ(s.status, "converged");
}

TEST(Viscosity, EntropyResidualOnConstantFamilyIsZero) {
    auto tr = entropy_residual({state(0.05, 7.0), state(0.02, 7.0), state(0.01, 7.0)});
    EXPECT_TRUE(std::isnan(tr.residual[0]));
    EXPECT_EQ(tr.residual[1], 0.0);
    EXPECT_EQ(tr.residual[2], 0.0);
    EXPECT_TRUE(tr.decreasing);
}

TEST(Viscosity, EntropyResidualPreconditions) {
    EXPECT_THROW(entropy_residual({state(0.05, 1)}), EntropyError);
    EXPECT_THROW(entropy_residual({state(0.01, 1), state(0.02, 1)}), EntropyError);
    auto tr = entropy_residual({state(0.05, 1), state(0.02, 1.1), state(0.01, 2)});
    EXPECT_FALSE(tr.decreasing);
}

TEST(Viscosity, MountainPassOnRoundFamilyIsFourPi) {
    const auto& sp = space();
    auto a = to_coefficients(sp, make_test_surface("round:1")), b = to_coefficients(sp, make_test_surface("round:2"));
    std::vector<Eigen::MatrixXd> path;
    for (int k = 0; k < 4; ++k) path.push_back((1 - k / 3.0) * a + (k / 3.0) * b);
    auto r = discrete_mountain_pass(sp, path, 0.0, 1);
    EXPECT_NEAR(r.beta, 4 * kPi, 1e-10);
    EXPECT_EQ(r.path.front(), a);
    EXPECT_EQ(r.path.back(), b);
    EXPECT_THROW(discrete_mountain_pass(sp, {a, b}, 0.0, 1), PreconditionError);
}

TEST(Viscosity, BranchedSurfacesAreRejected) {
    auto im = sample(make_test_surface("branched_cover:2"), grid());
    EXPECT_THROW(w_sigma_eval(im, 0.05), PreconditionError);
    EXPECT_THROW(to_coefficients(space(), make_test_surface("branched_cover:2")), PreconditionError);
}

TEST(Viscosity, ContinuationKeepsPartialTraceOnFailure) {
    const auto& sp = space();
    auto coef = to_coefficients(sp, make_test_surface("round:1"));
    ContinuationOptions co;
    co.compute_index = false;
    auto tr = sigma_continuation(sp, coef, SigmaSchedule::uniform({0.05, 0.02}), co);
    ASSERT_TRUE(tr.complete);
    ASSERT_EQ(tr.states.size(), 2u);
    EXPECT_TRUE(std::isfinite(tr.states[1].entropy_residual));
    EXPECT_TRUE(std::isnan(tr.states[0].entropy_residual));
    // an immersion collapsed to a point fails at the first stage
    auto bad = tr.states[0].coef * 0.0;
    auto tr2 = sigma_continuation(sp, bad, SigmaSchedule::uniform({0.05, 0.02}), co);
    EXPECT_FALSE(tr2.complete);
    EXPECT_TRUE(tr2.states.empty());
    EXPECT_FALSE(tr2.failure.empty());
}
