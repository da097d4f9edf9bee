#include <gtest/gtest.h>

#include "wlab/beltrami.hpp"
#include "wlab/onofri.hpp"

using namespace wlab;

namespace {
const QuadratureGrid& grid() {
    static const QuadratureGrid g = build_grid(24);
    return g;
}
UniformizeOptions newton() {
    UniformizeOptions o;
    o.method = UniformizeOptions::Method::Newton;
    o.band_limit = 16;
    return o;
}
}  // namespace

TEST(Uniformization, NewtonAgreesWithClosedFormOnConformalSurfaces) {
    for (auto spec : {"round:2", "mobius_inverted:round:1@0.3,0,0.2"}) {
        auto im = sample(make_test_surface(spec), grid());
        auto c = geometry(im);
        auto a = conformal_factor(im, c);
        auto b = conformal_factor(im, c, newton());
        EXPECT_EQ(a.method, "closed_form");
        EXPECT_EQ(b.method, "liouville_newton");
        double d = 0;
        for (int i = 0; i < im.size(); ++i) d = std::max(d, std::abs(a.alpha[i] - b.alpha[i]));
        EXPECT_LT(d, 1e-6) << spec;
    }
}

TEST(Uniformization, ResidualsAndGaugeOnSpheroid) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.5"), grid());
    auto c = geometry(im);
    auto cf = conformal_factor(im, c, newton());
    EXPECT_TRUE(cf.gauged);
    EXPECT_LT(std::abs(cf.unit_volume_residual), 1e-10);
    EXPECT_LT(cf.moments.norm(), 1e-8);
    for (int i = 0; i < im.size(); i += 29) EXPECT_NEAR(cf.U[i].norm(), 1.0, 1e-8);
}

TEST(Uniformization, BranchDefectMatchesMultiplicity) {
    auto im = sample(make_test_surface("branched_cover:2"), grid());
    auto c = geometry(im);
    auto cf = conformal_factor(im, c);
    ASSERT_EQ(cf.branch_defects.size(), 2u);  // z^2 branches over 0 and infinity
    for (double d : cf.branch_defects) EXPECT_NEAR(d / (2 * kPi), 1.0, 1e-6);
    EXPECT_LT(std::abs(cf.unit_volume_residual), 1e-8);
}

TEST(Uniformization, ClosedFormRefusedForNonConformalInput) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.5"), grid());
    auto c = geometry(im);
    UniformizeOptions o;
    o.method = UniformizeOptions::Method::ClosedForm;
    EXPECT_THROW(conformal_factor(im, c, o), ConfigError);
}

TEST(Uniformization, AlphaPrimeIsStableUnderStepHalving) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.5"), grid());
    auto ap = alpha_prime(im, harmonic_probe(im, 2, 0, 2), newton());
    EXPECT_LT(ap.richardson_gap, 1e-4);
    EXPECT_GT(ap.dirichlet, 0.0);
}

TEST(Beltrami, DiskIndicatorRecoversAffineMap) {
    PlaneOperators ops(PlaneGrid{256, 2.0});
    auto sol = solve_beltrami(ops, disk_indicator(ops.grid, 0.2));
    double err = 0;
    for (int j = 0; j < 256; ++j)
        for (int i = 0; i < 256; ++i) {
            cplx z = ops.grid.point(i, j);
            if (std::abs(z) < 0.9) err = std::max(err, std::abs(sol.f[j * 256 + i] - (z + 0.2 * std::conj(z))));
        }
    EXPECT_LT(err, 1e-3);
}

TEST(Beltrami, RandomCoefficientResidual) {
    PlaneOperators ops(PlaneGrid{128, 2.0});
    for (unsigned seed : {1u, 2u}) {
        auto mu = random_beltrami(ops.grid, 0.3, seed);
        EXPECT_LE(mu.k, 0.3 + 1e-12);
        auto sol = solve_beltrami(ops, mu);
        EXPECT_LT(sol.residual, 1e-6);
        for (std::size_t k = 1; k < sol.increments.size(); ++k) EXPECT_LT(sol.increments[k], sol.increments[k - 1]);
    }
}

TEST(Beltrami, BeurlingIsAnIsometry) {
    PlaneOperators ops(PlaneGrid{128, 2.0});
    PlaneField h(ops.grid.size());
    for (int j = 0; j < 128; ++j)
        for (int i = 0; i < 128; ++i) {
            cplx z = ops.grid.point(i, j);
            h[j * 128 + i] = std::exp(-std::norm(z) / 0.05) * cplx(z.real(), 2 * z.imag());  // zero mean
        }
    auto s = beurling_transform(ops, h);
    double a = 0, b = 0;
    for (std::size_t k = 0; k < h.size(); ++k) a += std::norm(h[k]), b += std::norm(s[k]);
    EXPECT_NEAR(std::sqrt(b / a), 1.0, 1e-10);
}

TEST(Beltrami, RefusesLargeCoefficientAndBoundaryContact) {
    PlaneOperators ops(PlaneGrid{64, 2.0});
    EXPECT_THROW(solve_beltrami(ops, disk_indicator(ops.grid, 0.7)), SolverError);
    PlaneField h(ops.grid.size(), cplx(1.0));
    EXPECT_THROW(beurling_transform(ops, h), AliasingError);
}
