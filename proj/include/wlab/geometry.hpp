#pragma once

#include "immersion.hpp"

namespace wlab {

struct SingularityError : std::runtime_error { using std::runtime_error::runtime_error; };

// Pointwise geometry of an immersion in a (not necessarily conformal) chart.
struct LocalGeometry {
    int dim = 3;
    Vec p;
    std::array<Vec, 2> e;             // d_x phi, d_y phi
    std::array<Vec, 3> phi2;          // xx, xy, yy
    Eigen::Matrix2d g, gi;
    double detg = 0, sqrtg = 0;
    double lambda = 0;                // (1/4) log det g
    double Gam[2][2][2];              // Gam[k][i][j]
    std::array<std::array<Vec, 2>, 2> II;
    Vec H;
    double K = 0;
    Eigen::Matrix4d Pn;               // projector onto the normal space
    Eigen::Matrix2d Ec;               // E_a = sum_i Ec(i,a) e_i, orthonormal and oriented
    std::array<Vec, 2> nrm;           // normal frame (dim-2 entries used)
    double h0_wp2 = 0;                // |h0|^2_WP = |H0|^2

    int codim() const { return dim - 2; }
    Vec II_ij(int i, int j) const { return II[i][j]; }
    // frame components of the second fundamental form
    Vec IIf(int a, int b) const {
        Vec r = Vec::Zero();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) r += Ec(i, a) * Ec(j, b) * II[i][j];
        return r;
    }
    // h0 = 2 II(e_z, e_z) in the local orthonormal frame, as (real, imaginary) vectors
    std::pair<Vec, Vec> h0() const {
        Vec a = IIf(0, 0), b = IIf(1, 1), c = IIf(0, 1);
        return {0.5 * (a - b), -c};
    }
    double II_norm2() const {
        double s = 0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l) s += gi(i, k) * gi(j, l) * II[i][j].dot(II[k][l]);
        return s;
    }
    Vec normal_part(const Vec& v) const { return Pn * v; }
};

inline Vec cross3(const Vec& a, const Vec& b) {
    return Vec(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0], 0.0);
}

inline LocalGeometry local_geometry(const VJet& J, int dim) {
    LocalGeometry G;
    G.dim = dim;
    G.p = J.value();
    G.e[0] = J.d(1, 0);
    G.e[1] = J.d(0, 1);
    G.phi2[0] = J.d(2, 0);
    G.phi2[1] = J.d(1, 1);
    G.phi2[2] = J.d(0, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) G.g(i, j) = G.e[i].dot(G.e[j]);
    G.detg = G.g.determinant();
    if (!(G.detg > 0) || !std::isfinite(G.detg)) throw SingularityError("degenerate metric");
    G.sqrtg = std::sqrt(G.detg);
    G.lambda = 0.25 * std::log(G.detg);
    G.gi = G.g.inverse();
    auto p2 = [&](int i, int j) -> const Vec& { return G.phi2[i + j]; };
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                G.Gam[k][i][j] = G.gi(k, 0) * G.e[0].dot(p2(i, j)) + G.gi(k, 1) * G.e[1].dot(p2(i, j));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) G.II[i][j] = p2(i, j) - G.Gam[0][i][j] * G.e[0] - G.Gam[1][i][j] * G.e[1];
    G.H = Vec::Zero();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) G.H += 0.5 * G.gi(i, j) * G.II[i][j];
    G.K = (G.II[0][0].dot(G.II[1][1]) - G.II[0][1].squaredNorm()) / G.detg;
    G.Pn = Eigen::Matrix4d::Zero();
    for (int k = 0; k < dim; ++k) G.Pn(k, k) = 1.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) G.Pn -= G.gi(i, j) * G.e[i] * G.e[j].transpose();
    double s11 = std::sqrt(G.g(0, 0));
    double s = std::sqrt(G.detg / G.g(0, 0));
    G.Ec << 1.0 / s11, -(G.g(0, 1) / G.g(0, 0)) / s, 0.0, 1.0 / s;
    if (dim == 3) {
        Vec n = cross3(G.e[0], G.e[1]);
        G.nrm[0] = n / n.norm();
        G.nrm[1] = Vec::Zero();
    } else {
        // Gram-Schmidt on the projected coordinate axes with the largest normal parts
        std::array<Vec, 4> cand;
        for (int k = 0; k < 4; ++k) cand[k] = G.Pn.col(k);
        int a = 0;
        for (int k = 1; k < 4; ++k)
            if (cand[k].norm() > cand[a].norm()) a = k;
        Vec n1 = cand[a] / cand[a].norm();
        int b = -1;
        double best = -1;
        for (int k = 0; k < 4; ++k) {
            if (k == a) continue;
            Vec v = cand[k] - n1.dot(cand[k]) * n1;
            if (v.norm() > best) { best = v.norm(); b = k; }
        }
        Vec n2 = cand[b] - n1.dot(cand[b]) * n1;
        G.nrm[0] = n1;
        G.nrm[1] = n2 / n2.norm();
    }
    auto [hr, hi] = G.h0();
    G.h0_wp2 = hr.squaredNorm() + hi.squaredNorm();
    return G;
}

struct GeometryCache {
    const QuadratureGrid* grid = nullptr;
    int dim = 3;
    std::vector<LocalGeometry> pts;
    std::vector<double> dA;        // chart area element per node (weight / rho)
    std::vector<char> excised;

    int size() const { return int(pts.size()); }
    double vol(int i) const { return excised[i] ? 0.0 : dA[i] * pts[i].sqrtg; }
};

inline GeometryCache geometry(const Immersion& im) {
    GeometryCache c;
    c.grid = im.grid;
    c.dim = im.dim;
    c.pts.resize(im.size());
    c.dA.resize(im.size());
    c.excised = im.excised;
    for (int i = 0; i < im.size(); ++i) {
        const auto& n = im.grid->nodes[i];
        c.dA[i] = n.weight / n.rho;
        if (im.excised[i]) {
            try {
                c.pts[i] = local_geometry(im.jets[i], im.dim);
            } catch (const SingularityError&) {
                c.pts[i] = LocalGeometry();
                c.pts[i].dim = im.dim;
            }
            continue;
        }
        try {
            c.pts[i] = local_geometry(im.jets[i], im.dim);
        } catch (const SingularityError&) {
            std::ostringstream os;
            os << "degenerate metric at node " << i << " (" << chart_name(n.chart) << " z=" << n.z.real() << "+"
               << n.z.imag() << "i)";
            throw SingularityError(os.str());
        }
    }
    return c;
}

// Integral of a node density f against dvol_g, skipping excised nodes.
inline double integrate_vol(const GeometryCache& c, const std::function<double(int)>& f) {
    double s = 0;
    for (int i = 0; i < c.size(); ++i)
        if (!c.excised[i]) s += c.vol(i) * f(i);
    return s;
}

// Excised caps: the density per round area is modelled as s^p (c0 + c1 s^2 + c2 s^4 + c3 s^6), p = 2 theta0 - 2,
// fitted on the first kept rings around the branch point and evaluated at the excised nodes with their weights.
// smooth = true uses p = 0 (densities that stay bounded at the branch point).
inline double excised_cap_estimate(const GeometryCache& c, const std::vector<BranchPoint>& br,
                                   const std::function<double(int)>& f, bool smooth = false) {
    if (br.empty()) return 0.0;
    const auto& g = *c.grid;
    double rc = excision_radius(g);
    constexpr int nt = 4;
    double total = 0;
    for (auto& b : br) {
        double p = smooth ? 0.0 : 2.0 * b.multiplicity - 2.0;
        std::vector<double> dist(c.size());
        std::vector<double> shells;
        for (int i = 0; i < c.size(); ++i) {
            dist[i] = std::acos(std::clamp(g.nodes[i].X.dot(b.X), -1.0, 1.0));
            if (!c.excised[i] && dist[i] >= rc && dist[i] < rc + 6 * g.spacing()) shells.push_back(dist[i]);
        }
        std::sort(shells.begin(), shells.end());
        shells.erase(std::unique(shells.begin(), shells.end(), [](double x, double y) { return y - x < 1e-9; }),
                     shells.end());
        if (int(shells.size()) < nt) throw NumericalError("no nodes available for branch extrapolation; raise the resolution");
        // rings when the branch point sits on a grid pole, otherwise a band of scattered nodes
        double smax = shells.size() <= 8 ? shells[nt - 1] + 1e-9 : rc + 3 * g.spacing();
        Eigen::Matrix4d AtA = Eigen::Matrix4d::Zero();
        Eigen::Vector4d Atb = Eigen::Vector4d::Zero();
        for (int i = 0; i < c.size(); ++i) {
            double s = dist[i];
            if (c.excised[i] || s < rc || s > smax) continue;
            double dens = f(i) * c.pts[i].sqrtg / g.nodes[i].rho;
            Eigen::Vector4d row;
            for (int k = 0; k < nt; ++k) row[k] = std::pow(s, p + 2 * k);
            AtA += g.nodes[i].weight * row * row.transpose();
            Atb += g.nodes[i].weight * row * dens;
        }
        Eigen::Vector4d C = AtA.colPivHouseholderQr().solve(Atb);
        for (int i = 0; i < c.size(); ++i) {
            double s = dist[i];
            if (s >= rc || !c.excised[i]) continue;
            double m = 0;
            for (int k = nt - 1; k >= 0; --k) m = m * s * s + C[k];
            total += g.nodes[i].weight * std::pow(s, p) * m;
        }
    }
    return total;
}

struct GaussBonnet {
    double total_curvature;
    double predicted;
};

inline double integrate_with_branches(const GeometryCache& c, const Immersion& im, const std::function<double(int)>& f) {
    return integrate_vol(c, f) + excised_cap_estimate(c, im.surface->branches, f);
}

inline GaussBonnet willmore_gauss_bonnet(const Immersion& im, const GeometryCache& c) {
    double tk = integrate_with_branches(c, im, [&](int i) { return c.pts[i].K; });
    double pred = 4 * kPi;
    for (auto& b : im.surface->branches) pred += 2 * kPi * (b.multiplicity - 1);
    return {tk, pred};
}

inline double area(const GeometryCache& c) { return integrate_vol(c, [](int) { return 1.0; }); }

inline double h0_energy(const Immersion& im, const GeometryCache& c) {
    return integrate_with_branches(c, im, [&](int i) { return c.pts[i].h0_wp2; });
}

struct H0LpReport {
    double p, lhs, rhs_factor, W, implied_C;
};

inline H0LpReport h0_lp_bound_report(const Immersion& im, const GeometryCache& c, double p) {
    if (!(p > 2) || !std::isfinite(p)) throw ConfigError("h0 Lp report needs 2 < p < infinity");
    if (!im.surface->branches.empty()) throw ConfigError("h0 Lp report is unsupported for branched immersions");
    H0LpReport r;
    r.p = p;
    r.lhs = integrate_vol(c, [&](int i) { return std::pow(c.pts[i].h0_wp2, p / 2); });
    r.rhs_factor = integrate_vol(c, [&](int i) { return std::pow(c.pts[i].H.squaredNorm(), p / 2); });
    r.W = integrate_vol(c, [&](int i) { return c.pts[i].H.squaredNorm(); });
    r.implied_C = r.lhs > r.rhs_factor ? std::log(r.lhs / r.rhs_factor) / (1 + r.W) : 0.0;
    return r;
}

}  // namespace wlab
