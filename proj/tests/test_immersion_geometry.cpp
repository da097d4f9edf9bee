#include <gtest/gtest.h>

#include "wlab/variations.hpp"

using namespace wlab;

namespace {
const QuadratureGrid& grid32() {
    static const QuadratureGrid g = build_grid(32);
    return g;
}
double willmore(const std::string& spec) { return willmore_energy(sample(make_test_surface(spec), grid32())); }
}  // namespace

TEST(ImmersionGeometry, RoundSphereIsFourPiAtEveryRadius) {
    for (double r : {0.5, 1.0, 3.0}) EXPECT_NEAR(willmore("round:" + std::to_string(r)) / (4 * kPi), 1.0, 1e-10);
}

TEST(ImmersionGeometry, RoundSphereLocalQuantities) {
    auto im = sample(make_test_surface("round:2"), grid32());
    auto c = geometry(im);
    for (int i = 0; i < c.size(); i += 37) {
        EXPECT_NEAR(c.pts[i].K, 0.25, 1e-12);
        EXPECT_NEAR(c.pts[i].H.squaredNorm(), 0.25, 1e-12);
        EXPECT_NEAR(c.pts[i].h0_wp2, 0.0, 1e-12);
        // mean curvature points inward
        EXPECT_LT(c.pts[i].H.dot(im.jets[i].value()), 0.0);
    }
    EXPECT_NEAR(area(c), 16 * kPi, 1e-10);
}

TEST(ImmersionGeometry, ProlateSpheroidAreaClosedForm) {
    double a = 1.0, cc = 1.5, e = std::sqrt(1 - a * a / (cc * cc));
    double exact = 2 * kPi * a * a * (1 + cc / (a * e) * std::asin(e));
    auto im = sample(make_test_surface("ellipsoid:1,1,1.5"), grid32());
    EXPECT_NEAR(area(geometry(im)) / exact, 1.0, 1e-10);
}

TEST(ImmersionGeometry, GaussBonnetSmooth) {
    for (auto spec : {"round:1", "ellipsoid:1,1,1.5", "perturbed_sphere:2,0,0.1", "ellipsoid:1,1.2,0.8"}) {
        auto im = sample(make_test_surface(spec), grid32());
        auto gb = willmore_gauss_bonnet(im, geometry(im));
        EXPECT_NEAR(gb.total_curvature, 4 * kPi, 1e-6) << spec;
        EXPECT_NEAR(gb.predicted, 4 * kPi, 1e-12);
    }
}

TEST(ImmersionGeometry, GaussBonnetCountsBranchMultiplicity) {
    auto im = sample(make_test_surface("branched_cover:2"), grid32());
    auto gb = willmore_gauss_bonnet(im, geometry(im));
    EXPECT_NEAR(gb.predicted, 8 * kPi, 1e-12);
    EXPECT_NEAR(gb.total_curvature, 8 * kPi, 1e-3);
    EXPECT_GT(std::count(im.excised.begin(), im.excised.end(), 1), 0);
}

TEST(ImmersionGeometry, WillmoreIsMobiusInvariantOnSpheres) {
    EXPECT_NEAR(willmore("mobius_inverted:round:1@0.3,0,0.2") / (4 * kPi), 1.0, 1e-6);
}

TEST(ImmersionGeometry, SpheroidStrictlyAboveRound) {
    EXPECT_GT(willmore("ellipsoid:1,1,1.5"), 4 * kPi + 0.1);
    EXPECT_GT(willmore("perturbed_sphere:2,0,0.1"), 4 * kPi);
}

TEST(ImmersionGeometry, CodimensionTwoLiftKeepsGaussBonnet) {
    auto im = sample(make_test_surface("lift4:0.3:ellipsoid:1,1.2,1.5"), grid32());
    EXPECT_EQ(im.dim, 4);
    auto gb = willmore_gauss_bonnet(im, geometry(im));
    EXPECT_NEAR(gb.total_curvature, 4 * kPi, 1e-6);
}

TEST(ImmersionGeometry, UmbilicFreeSpheroidHasPositiveTraceFreePart) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.5"), grid32());
    auto c = geometry(im);
    EXPECT_GT(h0_energy(im, c), 0.1);
}

TEST(ImmersionGeometry, SurfaceSpecErrors) {
    EXPECT_THROW(make_test_surface("torus:1"), ConfigError);
    EXPECT_THROW(make_test_surface("ellipsoid:1,2"), ConfigError);
    EXPECT_THROW(make_test_surface("mobius_inverted:round:1"), ConfigError);
}

TEST(ImmersionGeometry, DegenerateMetricIsReported) {
    auto im = sample(make_test_surface("round:1"), grid32());
    for (auto& j : im.jets) j = 0.0 * j;
    EXPECT_THROW(geometry(im), SingularityError);
}
