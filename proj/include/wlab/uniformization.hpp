#pragma once

#include "beltrami.hpp"
#include "geometry.hpp"

namespace wlab {

struct GaugeError : std::runtime_error { using std::runtime_error::runtime_error; };

constexpr double kKg0 = 4 * kPi;  // curvature of the volume-one round metric

// g = e^{2 alpha} g0 with g0 round of volume one; U identifies (S^2, g0) with the unit sphere conformally.
struct ConformalFactor {
    std::string method;                       // "closed_form" or "liouville_newton"
    std::vector<double> alpha;
    std::vector<Eigen::Vector2d> dalpha;      // chart gradient
    std::vector<double> lap_alpha;            // Delta_g alpha (before gauging)
    std::vector<Eigen::Vector3d> U;
    std::vector<std::array<Eigen::Vector3d, 2>> dU;
    Eigen::VectorXd coefficients;             // harmonic coefficients (Newton method)
    int band_limit = -1;
    bool gauged = false;
    Eigen::Vector3d gauge_b = Eigen::Vector3d::Zero();
    Eigen::Vector3d moments = Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
    double unit_volume_residual = 0;
    double liouville_residual_l1 = 0;
    std::vector<double> branch_defects;
    int newton_iterations = 0;
    std::vector<double> eigen_check;          // generalized eigenvalues used for U
};

struct UniformizeOptions {
    enum class Method { Auto, ClosedForm, Newton } method = Method::Auto;
    int band_limit = 16;
    double tol = 1e-11;
    int max_iter = 40;
    bool gauge = true;
    const BasisTable<2>* basis = nullptr;   // optional shared table for the Newton method
};

// ---------- closed form for conformal parametrizations ----------

inline ConformalFactor conformal_factor_closed_form(const Immersion& im, const GeometryCache& c) {
    ConformalFactor cf;
    cf.method = "closed_form";
    int n = im.size();
    cf.alpha.resize(n);
    cf.dalpha.resize(n);
    cf.lap_alpha.assign(n, 0.0);
    cf.U.resize(n);
    cf.dU.resize(n);
    const auto& g = *im.grid;
    for (int i = 0; i < n; ++i) {
        const auto& nd = g.nodes[i];
        auto e = tangent_jets(im.jets[i]);
        J2 g00, g01, g11;
        for (int k = 0; k < im.dim; ++k) {
            g00 += e[0][k] * e[0][k];
            g01 += e[0][k] * e[1][k];
            g11 += e[1][k] * e[1][k];
        }
        auto X = sphere_point_jet<3>(nd.chart, nd.z);
        // rho = 4/(1+|z|^2)^2 = (1 +/- X3)^2
        J2 q = truncate<2>(J3(1.0) + X[2] * (nd.chart == Chart::North ? 1.0 : -1.0));
        J2 rho = q * q;
        for (int k = 0; k < 3; ++k) cf.U[i][k] = X[k].value();
        for (int d = 0; d < 2; ++d)
            for (int k = 0; k < 3; ++k) cf.dU[i][d][k] = X[k].d(d == 0, d == 1);
        if (c.excised[i]) {
            cf.alpha[i] = 0;
            cf.dalpha[i].setZero();
            continue;
        }
        J2 det = g00 * g11 - g01 * g01;
        J2 a = log(det) * 0.25 - log(rho * (1.0 / (4 * kPi))) * 0.5;
        cf.alpha[i] = a.value();
        cf.dalpha[i] = {a.d(1, 0), a.d(0, 1)};
        const auto& G = c.pts[i];
        double lap = 0;
        double h[2][2] = {{a.d(2, 0), a.d(1, 1)}, {a.d(1, 1), a.d(0, 2)}};
        for (int p = 0; p < 2; ++p)
            for (int r = 0; r < 2; ++r) lap += G.gi(p, r) * (h[p][r] - G.Gam[0][p][r] * cf.dalpha[i][0] - G.Gam[1][p][r] * cf.dalpha[i][1]);
        cf.lap_alpha[i] = lap;
    }
    return cf;
}

// ---------- Galerkin Newton on the Liouville equation ----------

struct LiouvilleSystem {
    Eigen::MatrixXd Y, Dx, Dy, Dxx, Dxy, Dyy;
    Eigen::MatrixXd A;   // Dirichlet form
    Eigen::VectorXd vol, K;
};

inline LiouvilleSystem liouville_system(const GeometryCache& c, const BasisTable<2>& B) {
    LiouvilleSystem s;
    s.Y = B.comp[Jet<2>::idx(0, 0)];
    s.Dx = B.comp[Jet<2>::idx(1, 0)];
    s.Dy = B.comp[Jet<2>::idx(0, 1)];
    s.Dxx = 2.0 * B.comp[Jet<2>::idx(2, 0)];
    s.Dxy = B.comp[Jet<2>::idx(1, 1)];
    s.Dyy = 2.0 * B.comp[Jet<2>::idx(0, 2)];
    int n = c.size();
    s.vol.resize(n);
    s.K.resize(n);
    Eigen::VectorXd w00(n), w01(n), w11(n);
    for (int i = 0; i < n; ++i) {
        s.vol[i] = c.vol(i);
        s.K[i] = c.pts[i].K;
        w00[i] = s.vol[i] * c.pts[i].gi(0, 0);
        w01[i] = s.vol[i] * c.pts[i].gi(0, 1);
        w11[i] = s.vol[i] * c.pts[i].gi(1, 1);
    }
    s.A = s.Dx.transpose() * w00.asDiagonal() * s.Dx + s.Dy.transpose() * w11.asDiagonal() * s.Dy +
          s.Dx.transpose() * w01.asDiagonal() * s.Dy + s.Dy.transpose() * w01.asDiagonal() * s.Dx;
    s.A = 0.5 * (s.A + s.A.transpose());
    return s;
}

inline ConformalFactor conformal_factor_newton(const Immersion& im, const GeometryCache& c, const UniformizeOptions& opt) {
    if (!im.surface->branches.empty()) throw ConfigError("branched surfaces need a conformal parametrization");
    const auto& g = *im.grid;
    int L = opt.basis ? opt.basis->L : opt.band_limit;
    check_band(g, L);
    BasisTable<2> local;
    if (!opt.basis) local = build_basis<2>(g, L);
    const BasisTable<2>& B = opt.basis ? *opt.basis : local;
    auto S = liouville_system(c, B);
    int n = c.size(), nb = B.count();
    // start from the round comparison: alpha0 = 1/2 log(4 pi sqrt(g) / rho)
    Eigen::VectorXd a0(n);
    for (int i = 0; i < n; ++i) a0[i] = 0.5 * std::log(4 * kPi * c.pts[i].sqrtg / g.nodes[i].rho);
    Eigen::VectorXd wts = weights(g);
    Eigen::VectorXd coef = S.Y.transpose() * (wts.asDiagonal() * a0);
    auto residual = [&](const Eigen::VectorXd& cc, Eigen::VectorXd& e) {
        Eigen::VectorXd al = S.Y * cc;
        e = (-2.0 * al).array().exp();
        return Eigen::VectorXd(S.A * cc - S.Y.transpose() * S.vol.cwiseProduct(S.K) +
                               kKg0 * S.Y.transpose() * S.vol.cwiseProduct(e));
    };
    Eigen::VectorXd e;
    Eigen::VectorXd R = residual(coef, e);
    double scale = (S.Y.transpose() * S.vol.cwiseProduct(S.K)).norm() + 1.0;
    int it = 0;
    for (; it < opt.max_iter && R.norm() > opt.tol * scale; ++it) {
        Eigen::MatrixXd J = S.A - 2 * kKg0 * S.Y.transpose() * S.vol.cwiseProduct(e).asDiagonal() * S.Y;
        J = 0.5 * (J + J.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
        const auto& lam = es.eigenvalues();
        // drop the three directions closest to the conformal kernel
        std::vector<int> order(nb);
        for (int k = 0; k < nb; ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(lam[a]) < std::abs(lam[b]); });
        Eigen::VectorXd rhs = es.eigenvectors().transpose() * R;
        for (int k = 0; k < nb; ++k) rhs[k] /= lam[k];
        for (int k = 0; k < 3; ++k) rhs[order[k]] = 0;
        Eigen::VectorXd step = -(es.eigenvectors() * rhs);
        double t = 1.0;
        double r0 = R.norm();
        Eigen::VectorXd en, Rn;
        for (int ls = 0; ls < 30; ++ls) {
            Rn = residual(coef + t * step, en);
            if (Rn.norm() < (1 - 1e-4 * t) * r0 || Rn.norm() < opt.tol * scale) break;
            t *= 0.5;
        }
        coef += t * step;
        R = Rn;
        e = en;
    }
    if (R.norm() > 1e3 * opt.tol * scale) throw NumericalError("Liouville Newton did not converge");
    ConformalFactor cf;
    cf.method = "liouville_newton";
    cf.newton_iterations = it;
    cf.coefficients = coef;
    cf.band_limit = L;
    Eigen::VectorXd al = S.Y * coef, ax = S.Dx * coef, ay = S.Dy * coef;
    Eigen::VectorXd axx = S.Dxx * coef, axy = S.Dxy * coef, ayy = S.Dyy * coef;
    cf.alpha.assign(al.data(), al.data() + n);
    cf.dalpha.resize(n);
    cf.lap_alpha.resize(n);
    for (int i = 0; i < n; ++i) {
        cf.dalpha[i] = {ax[i], ay[i]};
        const auto& G = c.pts[i];
        double h[2][2] = {{axx[i], axy[i]}, {axy[i], ayy[i]}};
        double lap = 0;
        for (int p = 0; p < 2; ++p)
            for (int r = 0; r < 2; ++r) lap += G.gi(p, r) * (h[p][r] - G.Gam[0][p][r] * ax[i] - G.Gam[1][p][r] * ay[i]);
        cf.lap_alpha[i] = lap;
    }
    // first nonconstant eigenfunctions of (A, M_g0) give the conformal identification with S^2
    Eigen::MatrixXd M = S.Y.transpose() * S.vol.cwiseProduct(e).asDiagonal() * S.Y;
    M = 0.5 * (M + M.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(S.A, M);
    cf.eigen_check = {ges.eigenvalues()[0], ges.eigenvalues()[1], ges.eigenvalues()[2], ges.eigenvalues()[3],
                      ges.eigenvalues()[4]};
    for (int k = 1; k <= 3; ++k)
        if (std::abs(ges.eigenvalues()[k] / (2 * kKg0) - 1) > 1e-2)
            throw NumericalError("first eigenvalue of the uniformized metric is off; raise the band limit");
    Eigen::MatrixXd V = ges.eigenvectors().middleCols(1, 3) / std::sqrt(3.0);
    Eigen::MatrixXd Uv = S.Y * V, Ux = S.Dx * V, Uy = S.Dy * V;
    cf.U.resize(n);
    cf.dU.resize(n);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d u = Uv.row(i).transpose();
        Eigen::Vector3d du[2] = {Ux.row(i).transpose(), Uy.row(i).transpose()};
        double r = u.norm();
        cf.U[i] = u / r;
        for (int d = 0; d < 2; ++d) cf.dU[i][d] = (du[d] - cf.U[i] * cf.U[i].dot(du[d])) / r;
    }
    return cf;
}

inline void fill_residuals(ConformalFactor& cf, const GeometryCache& c, const std::vector<BranchPoint>& br = {}) {
    double vol1 = 0, l1 = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        double e = std::exp(-2 * cf.alpha[i]);
        vol1 += c.vol(i) * e;
        double r = -cf.lap_alpha[i] - c.pts[i].K + kKg0 * e;
        l1 += c.vol(i) * std::abs(r);
    }
    // e^{-2 alpha} dvol_g is the round measure, bounded across branch points
    vol1 += excised_cap_estimate(c, br, [&](int i) { return std::exp(-2 * cf.alpha[i]); }, true);
    cf.unit_volume_residual = vol1 - 1.0;
    cf.liouville_residual_l1 = l1;
}

// Flux of d alpha through a small chart circle around each branch point: (theta0 - 1) 2 pi.
inline std::vector<double> branch_defects(const Immersion& im) {
    std::vector<double> out;
    const auto& g = *im.grid;
    double rc = excision_radius(g);
    for (auto& b : im.surface->branches) {
        double r = std::tan(0.5 * rc);
        int m = 256;
        double flux = 0;
        for (int k = 0; k < m; ++k) {
            double t = 2 * kPi * (k + 0.5) / m;
            cplx z = b.z + std::polar(r, t);
            VJet J = im.surface->jet(b.chart, z);
            auto e = tangent_jets(J);
            J2 g00, g01, g11;
            for (int a = 0; a < im.dim; ++a) {
                g00 += e[0][a] * e[0][a];
                g01 += e[0][a] * e[1][a];
                g11 += e[1][a] * e[1][a];
            }
            J2 det = g00 * g11 - g01 * g01;
            auto X = sphere_point_jet<2>(b.chart, z);
            J2 q = J2(1.0) + X[2] * (b.chart == Chart::North ? 1.0 : -1.0);
            J2 a = log(det) * 0.25 - log(q * q * (1.0 / (4 * kPi))) * 0.5;
            // radial derivative times arc length
            double dr = a.d(1, 0) * std::cos(t) + a.d(0, 1) * std::sin(t);
            flux += dr * r * (2 * kPi / m);
        }
        // interior curvature balance: int_D (K_g - K_g0 e^{-2 alpha}) dvol_g over the same disk
        std::vector<double> xs, ws;
        gauss_legendre(32, xs, ws);
        double interior = 0;
        for (int k = 0; k < 32; ++k) {
            double s = 0.5 * r * (xs[k] + 1);
            for (int j = 0; j < 64; ++j) {
                double t = 2 * kPi * (j + 0.5) / 64;
                cplx z = b.z + std::polar(s, t);
                auto G = local_geometry(im.surface->jet(b.chart, z), im.dim);
                interior += (G.K * G.sqrtg - round_density(z)) * s * 0.5 * r * ws[k] * (2 * kPi / 64);
            }
        }
        out.push_back(flux + interior);
    }
    return out;
}

// ---------- Aubin gauge ----------

inline Eigen::Vector3d boost(const Eigen::Vector3d& x, const Eigen::Vector3d& b) {
    Eigen::Vector3d d = x - b;
    return ((1 - b.squaredNorm()) * d - d.squaredNorm() * b) / d.squaredNorm();
}

inline Eigen::Vector3d gauge_moments(const ConformalFactor& cf, const GeometryCache& c, const Eigen::Vector3d& b) {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    double A = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        m += c.vol(i) * boost(cf.U[i], b);
        A += c.vol(i);
    }
    return m / A;
}

// Gauged alpha' = alpha - log((1 - |b|^2)/|U - b|^2).
inline void aubin_gauge(ConformalFactor& cf, const GeometryCache& c, double tol = 1e-13, int max_iter = 60) {
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    Eigen::Vector3d m = gauge_moments(cf, c, b);
    int it = 0;
    for (; it < max_iter && m.norm() > tol; ++it) {
        Eigen::Matrix3d J;
        double h = 1e-7;
        for (int k = 0; k < 3; ++k) {
            Eigen::Vector3d bp = b, bm = b;
            bp[k] += h;
            bm[k] -= h;
            J.col(k) = (gauge_moments(cf, c, bp) - gauge_moments(cf, c, bm)) / (2 * h);
        }
        Eigen::Vector3d step = -J.colPivHouseholderQr().solve(m);
        double t = 1.0;
        Eigen::Vector3d bn, mn;
        for (int ls = 0; ls < 40; ++ls) {
            bn = b + t * step;
            if (bn.norm() < 1 - 1e-6) {
                mn = gauge_moments(cf, c, bn);
                if (mn.norm() < m.norm()) break;
            }
            t *= 0.5;
        }
        b = bn;
        m = mn;
    }
    if (m.norm() > 1e3 * tol) {
        std::ostringstream os;
        os << "Aubin gauge did not converge; moments " << m.transpose();
        throw GaugeError(os.str());
    }
    double s = 1 - b.squaredNorm();
    for (int i = 0; i < c.size(); ++i) {
        Eigen::Vector3d d = cf.U[i] - b;
        double d2 = d.squaredNorm();
        cf.alpha[i] -= std::log(s / d2);
        for (int k = 0; k < 2; ++k) cf.dalpha[i][k] += 2 * d.dot(cf.dU[i][k]) / d2;
        // derivative of the boosted map
        for (int k = 0; k < 2; ++k) {
            const Eigen::Vector3d v = cf.dU[i][k];
            cf.dU[i][k] = s * (v - 2 * d * d.dot(v) / d2) / d2;
        }
        cf.U[i] = boost(cf.U[i], b);
    }
    cf.gauged = true;
    cf.gauge_b = b;
    cf.moments = gauge_moments(cf, c, Eigen::Vector3d::Zero());
}

inline ConformalFactor conformal_factor(const Immersion& im, const GeometryCache& c, const UniformizeOptions& opt = {}) {
    using M = UniformizeOptions::Method;
    bool closed = im.surface->conformal && !im.modified;
    if (opt.method == M::ClosedForm && !closed) throw ConfigError("closed form needs an unmodified conformal parametrization");
    ConformalFactor cf = (opt.method == M::ClosedForm || (opt.method == M::Auto && closed))
                             ? conformal_factor_closed_form(im, c)
                             : conformal_factor_newton(im, c, opt);
    fill_residuals(cf, c, im.surface->branches);
    if (!im.surface->branches.empty()) cf.branch_defects = branch_defects(im);
    if (opt.gauge) aubin_gauge(cf, c);
    return cf;
}

inline double dirichlet_energy(const GeometryCache& c, const std::vector<Eigen::Vector2d>& df) {
    double s = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        s += c.vol(i) * df[i].dot(c.pts[i].gi * df[i]);
    }
    return s;
}

// ---------- alpha'_0 by differences of gauged solutions ----------

struct AlphaPrime {
    std::vector<double> value;
    std::vector<Eigen::Vector2d> grad;
    double h = 0;
    double dirichlet = 0;        // int |d alpha'_0|^2 dvol_g
    double richardson_gap = 0;   // max change between h and h/2 estimates
};

inline AlphaPrime alpha_prime(const Immersion& im, const NormalVariation& w, const UniformizeOptions& opt, double h = 1e-3) {
    auto solve = [&](double t) {
        Immersion d = displaced(im, w.w, t);
        d.modified = true;
        auto c = geometry(d);
        UniformizeOptions o = opt;
        o.method = UniformizeOptions::Method::Newton;
        o.gauge = true;
        return conformal_factor(d, c, o);
    };
    auto c0 = geometry(im);
    int n = im.size();
    std::array<ConformalFactor, 4> s = {solve(h), solve(-h), solve(h / 2), solve(-h / 2)};
    AlphaPrime ap;
    ap.h = h;
    ap.value.resize(n);
    ap.grad.resize(n);
    for (int i = 0; i < n; ++i) {
        double d1 = (s[0].alpha[i] - s[1].alpha[i]) / (2 * h), d2 = (s[2].alpha[i] - s[3].alpha[i]) / h;
        ap.value[i] = (4 * d2 - d1) / 3;
        ap.richardson_gap = std::max(ap.richardson_gap, std::abs(d2 - d1));
        Eigen::Vector2d g1 = (s[0].dalpha[i] - s[1].dalpha[i]) / (2 * h), g2 = (s[2].dalpha[i] - s[3].dalpha[i]) / h;
        ap.grad[i] = (4 * g2 - g1) / 3;
    }
    ap.dirichlet = dirichlet_energy(c0, ap.grad);
    return ap;
}

struct AlphaPrimeReport {
    double lhs = 0, W = 0, dirichlet_alpha = 0, sup_dw = 0, bracket_without_C = 0, implied_C = 0;
};

inline AlphaPrimeReport alpha_prime_estimate_report(const Immersion& im, const NormalVariation& w, const ConformalFactor& cf,
                                                    const AlphaPrime& ap) {
    auto c = geometry(im);
    AlphaPrimeReport r;
    r.lhs = ap.dirichlet;
    r.W = energies(im, c).W;
    r.dirichlet_alpha = dirichlet_energy(c, cf.dalpha);
    r.sup_dw = energy_norm(im, c, w).sup_dw;
    r.bracket_without_C = std::sqrt(r.W) + std::sqrt(std::max(0.0, r.W - 4 * kPi)) + 4 * std::sqrt(r.dirichlet_alpha);
    r.implied_C = r.sup_dw > 0 ? r.lhs / r.sup_dw - r.bracket_without_C : 0.0;
    return r;
}

}  // namespace wlab
