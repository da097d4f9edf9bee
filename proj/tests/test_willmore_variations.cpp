#include <gtest/gtest.h>

#include "wlab/fd_oracle.hpp"

using namespace wlab;

namespace {
const QuadratureGrid& grid() {
    static const QuadratureGrid g = build_grid(24);
    return g;
}
double W_of(const Immersion& x) { return energies(x, geometry(x)).W; }
double F_of(const Immersion& x) { return energies(x, geometry(x)).F; }
}  // namespace

TEST(WillmoreVariations, FirstAndSecondMatchOracleOnSpheroid) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.5"), grid());
    auto c = geometry(im);
    for (auto [l, m, k] : std::vector<std::array<int, 3>>{{2, 0, 0}, {2, 1, 1}, {3, -2, 2}}) {
        auto w = harmonic_probe(im, l, m, k);
        auto v = variations(im, c, w);
        EXPECT_LT(rel_error(v.DW, fd_oracle(W_of, im, w, 1).value), 1e-6) << w.label;
        EXPECT_LT(rel_error(v.D2W, fd_oracle(W_of, im, w, 2).value), 1e-6) << w.label;
        EXPECT_LT(rel_error(v.DF, fd_oracle(F_of, im, w, 1).value), 1e-6) << w.label;
        EXPECT_LT(rel_error(v.D2F, fd_oracle(F_of, im, w, 2).value), 1e-6) << w.label;
    }
}

TEST(WillmoreVariations, RoundSphereIsCriticalWithKnownSpectrum) {
    auto im = sample(make_test_surface("round:1"), grid());
    auto c = geometry(im);
    for (int l = 0; l <= 3; ++l) {
        auto w = harmonic_probe(im, l, 0, 0);
        auto v = variations(im, c, w);
        EXPECT_NEAR(v.DW, 0.0, 1e-10);
        // D2W(Y_l n) = (l-1) l (l+1) (l+2) / 2 on the unit sphere, with Y_l normalized
        double expect = 0.5 * (l - 1) * l * (l + 1) * (l + 2);
        EXPECT_NEAR(v.D2W, expect, 1e-8 * (1 + expect)) << l;
    }
}

TEST(WillmoreVariations, TotalCurvatureHasNoSecondVariation) {
    auto im = sample(make_test_surface("perturbed_sphere:2,0,0.1"), grid());
    auto c = geometry(im);
    auto w = harmonic_probe(im, 3, 1, 0);
    EXPECT_NEAR(d2_total_curvature(im, c, w), 0.0, 1e-8);
    EXPECT_NEAR(second_variation_cw(im, c, w), second_variation(im, c, w), 1e-8);
}

TEST(WillmoreVariations, NormalLaplacianIdentity) {
    for (auto spec : {"ellipsoid:1,1,1.5", "perturbed_sphere:2,0,0.1", "lift4:0.3:ellipsoid:1,1.2,1.5"}) {
        auto im = sample(make_test_surface(spec), grid());
        auto c = geometry(im);
        for (int k = 0; k < im.dim; ++k) EXPECT_LT(normal_laplacian_identity_residual(im, c, harmonic_probe(im, 2, 1, k)), 1e-7) << spec;
    }
}

TEST(WillmoreVariations, FirstVariationBoundHolds) {
    auto im = sample(make_test_surface("perturbed_sphere:2,0,0.1"), grid());
    auto c = geometry(im);
    double W = energies(im, c).W;
    for (int l = 1; l <= 3; ++l)
        for (int m = -l; m <= l; ++m) {
            auto w = harmonic_probe(im, l, m, (l + m) % 3);
            EXPECT_LE(std::abs(first_variation(im, c, w)), dw_bound(W, energy_norm(im, c, w)));
        }
}

TEST(WillmoreVariations, TangentialFieldsAreRejected) {
    auto im = sample(make_test_surface("round:1"), grid());
    auto c = geometry(im);
    NormalVariation w;
    w.w = im.jets;  // radial on the round sphere: normal; rotate to make it tangential
    for (auto& j : w.w) std::swap(j.c[0], j.c[2]), j.c[2] *= 0.0;
    EXPECT_THROW(variations(im, c, w), PreconditionError);
}

TEST(WillmoreVariations, FiniteDifferenceEstimatesSecondOrder) {
    auto r = fd_derivative([](double t) { return std::exp(t) + std::sin(3 * t); }, 1, 0.1);
    EXPECT_NEAR(r.value, 4.0, 1e-8);
    ASSERT_TRUE(r.order_measurable);
    EXPECT_NEAR(r.observed_order, 2.0, 0.1);
    EXPECT_THROW(fd_derivative([](double) { return 0.0; }, 3, 0.1), ConfigError);
}

TEST(WillmoreVariations, ShapeMismatchIsRejected) {
    auto im = sample(make_test_surface("round:1"), grid());
    auto c = geometry(im);
    NormalVariation w;
    w.w.resize(3);
    EXPECT_THROW(variations(im, c, w), ShapeError);
}
