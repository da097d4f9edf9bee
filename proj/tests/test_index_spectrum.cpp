#include <gtest/gtest.h>

#include "wlab/index_spectrum.hpp"

using namespace wlab;

namespace {
const QuadratureGrid& grid() {
    static const QuadratureGrid g = build_grid(24);
    return g;
}
const Immersion& round1() {
    static const Immersion im = sample(make_test_surface("round:1"), grid());
    return im;
}
const HessianAssembly& roundW() {
    static const HessianAssembly H = assemble_hessian(round1(), EnergyKind::W, 4);
    return H;
}
}  // namespace

TEST(IndexSpectrum, RoundSphereHasIndexZeroAndKnownEigenvalues) {
    auto rep = morse_index(roundW());
    EXPECT_EQ(rep.dimension, 25);
    EXPECT_EQ(rep.index, 0);
    EXPECT_EQ(rep.nullity, 4);
    // unit sphere: (l-1) l (l+1) (l+2) / 2 with 2l+1 copies
    std::vector<double> expect;
    for (int l = 0; l <= 4; ++l)
        for (int m = -l; m <= l; ++m) expect.push_back((l - 1) * l * (l + 1) * (l + 2) / 2.0);
    std::sort(expect.begin(), expect.end());
    for (int k = 0; k < rep.dimension; ++k) EXPECT_NEAR(rep.eigenvalues[k], expect[std::size_t(k)], 1e-6 * 180) << k;
}

TEST(IndexSpectrum, DegenerateEigenvaluesAgreeAcrossM) {
    auto rep = morse_index(roundW());
    int k = 0;
    for (int l = 0; l <= 4; ++l) {
        double lo = rep.eigenvalues[k], hi = rep.eigenvalues[k + 2 * l];
        EXPECT_LE(hi - lo, 1e-6 * std::max(1.0, std::abs(hi))) << "l=" << l;
        k += 2 * l + 1;
    }
}

TEST(IndexSpectrum, CurvatureSubtractedEnergyGivesSameSpectrumOnRound) {
    auto a = morse_index(roundW());
    auto b = morse_index(assemble_hessian(round1(), EnergyKind::CW, 4));
    EXPECT_EQ(a.index, b.index);
    EXPECT_EQ(a.nullity, b.nullity);
    EXPECT_LE((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff(), a.tau);
}

TEST(IndexSpectrum, PolarizationIsSymmetric) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.5"), grid());
    EXPECT_LT(polarization_asymmetry(im, EnergyKind::W, 2), 1e-10);
    EXPECT_THROW(polarization_asymmetry(im, EnergyKind::Wsigma, 2), ConfigError);
}

TEST(IndexSpectrum, RayleighQuotientsMatchEigenvalues) {
    auto rep = morse_index(roundW());
    for (auto& r : rayleigh_crosscheck(round1(), EnergyKind::W, 4, rep, 9)) EXPECT_LT(r.rel_error, 1e-3) << r.k;
}

TEST(IndexSpectrum, SpheroidIsStableForW) {
    auto im = sample(make_test_surface("ellipsoid:1,1,1.2"), grid());
    auto rep = morse_index(assemble_hessian(im, EnergyKind::W, 3));
    // translations survive as null directions, dilation as well since W is scale invariant
    EXPECT_GE(rep.nullity + rep.index, 1);
    EXPECT_GT(rep.positive, 0);
}

TEST(IndexSpectrum, ViscousHessianOnRoundIsPositiveOffTranslations) {
    AssemblyOptions ao;
    ao.sigma = 0.05;
    ao.uopt.band_limit = 12;
    auto H = assemble_hessian(round1(), EnergyKind::Wsigma, 2, ao);
    EXPECT_LT(H.onofri_asymmetry, 1e-3);
    auto rep = morse_index(H);
    EXPECT_EQ(rep.index, 0);
    EXPECT_EQ(rep.dimension, 9);
}

TEST(IndexSpectrum, PencilErrors) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2), M = Eigen::MatrixXd::Identity(3, 3);
    EXPECT_THROW(morse_index(A, M), ShapeError);
    Eigen::MatrixXd Mbad = -Eigen::MatrixXd::Identity(2, 2);
    EXPECT_THROW(morse_index(A, Mbad), AssemblyError);
    auto empty = morse_index(Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 0));
    EXPECT_EQ(empty.dimension, 0);
}

TEST(IndexSpectrum, CutoffDirichletMatchesClosedForm) {
    BranchPoint b;
    for (auto [a, f] : std::vector<std::pair<double, double>>{{0.5, 0.1}, {0.3, 0.09}, {0.2, 0.01}, {0.1, 1e-4}, {0.05, 1e-6}}) {
        auto eta = log_cutoff(b, a, f);
        EXPECT_NEAR(eta.dirichlet(), eta.closed_form(), 1e-10) << a;
        EXPECT_NEAR(eta.closed_form(), 2 * kPi / std::log(a / f), 1e-15);
    }
    EXPECT_THROW(log_cutoff(b, 0.1, 0.2), DomainError);
    EXPECT_THROW(log_cutoff(b, 1.5, 0.2), DomainError);
}

TEST(IndexSpectrum, LocalizedIntegralsDecreaseOnBranchedCover) {
    auto s = make_test_surface("branched_cover:2");
    auto u = [s](Chart ch, cplx z) { return s->jet(ch, z).c[0]; };
    auto rep = localized_index_study(s, s->branches, u, {0.4, 0.2, 0.1, 0.05, 0.025}, [](double a) { return a * a; });
    ASSERT_EQ(rep.rows.size(), 5u);
    EXPECT_TRUE(rep.decreasing);
    for (auto& r : rep.rows) EXPECT_NEAR(r.eta_dirichlet, r.eta_closed_form, 1e-10);
}

TEST(IndexSpectrum, UnmarkedSurfaceHasNothingToCut) {
    auto s = make_test_surface("round:1");
    auto u = [s](Chart ch, cplx z) { return s->jet(ch, z).c[0]; };
    auto rep = localized_index_study(s, {}, u, {0.2, 0.1}, [](double a) { return a * a; });
    for (auto& r : rep.rows) {
        EXPECT_EQ(r.J1, 0.0);
        EXPECT_EQ(r.cutoff_error, 0.0);
    }
}
