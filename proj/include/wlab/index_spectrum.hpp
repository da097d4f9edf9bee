#pragma once

#include <Eigen/Eigenvalues>

#include "viscosity.hpp"

namespace wlab {

enum class EnergyKind { W, CW, Wsigma };

inline EnergyKind parse_energy(const std::string& s) {
    if (s == "W") return EnergyKind::W;
    if (s == "CW") return EnergyKind::CW;
    if (s == "Wsigma") return EnergyKind::Wsigma;
    throw ConfigError("unknown energy '" + s + "' (expected W, CW or Wsigma)");
}
inline const char* energy_name(EnergyKind e) {
    switch (e) {
        case EnergyKind::W: return "W";
        case EnergyKind::CW: return "CW";
        default: return "Wsigma";
    }
}

struct AssemblyError : std::runtime_error { using std::runtime_error::runtime_error; };

// ---------- scalar profiles on the sphere ----------

// Coordinate of the node point in another chart, as jets in the node's own chart.
inline std::pair<J3, J3> chart_coordinate_jet(Chart target, Chart own, cplx z) {
    auto X = sphere_point_jet<3>(own, z);
    double s = target == Chart::North ? 1.0 : -1.0;
    J3 q = inv(X[2] * s + 1.0);
    return {X[0] * q, X[1] * q * s};
}

// |zeta - a|^2 in the chart of a marked point
inline J3 mark_distance2(const BranchPoint& b, Chart own, cplx z) {
    auto [x, y] = chart_coordinate_jet(b.chart, own, z);
    J3 dx = x - b.z.real(), dy = y - b.z.imag();
    return dx * dx + dy * dy;
}

using ScalarProfile = std::function<J3(Chart, cplx)>;

// Smooth stand-in for min(1, (r/rho0)^theta0): (t / (1 + t))^{1/2}, t = (r/rho0)^{2 theta0}.
inline ScalarProfile branch_profile(const std::vector<BranchPoint>& br, double rho0 = 0.5) {
    return [br, rho0](Chart ch, cplx z) {
        J3 p(1.0);
        for (auto& b : br) {
            J3 s2 = mark_distance2(b, ch, z) * (1.0 / (rho0 * rho0));
            J3 t(1.0);
            for (int k = 0; k < b.multiplicity; ++k) t = t * s2;
            p = p * sqrt(t * inv(t + 1.0));
        }
        return p;
    };
}

// Logarithmic cutoff: 0 on B_f, 1 outside B_alpha, log(r/f)/log(alpha/f) between (chart radii).
struct LogCutoff {
    std::vector<BranchPoint> centers;
    double alpha = 0.1, f = 0.01;

    LogCutoff(std::vector<BranchPoint> c, double a, double fa) : centers(std::move(c)), alpha(a), f(fa) {
        if (!(fa > 0 && fa < a && a < 1)) throw DomainError("log cutoff needs 0 < f(alpha) < alpha < 1");
    }
    double log_ratio() const { return std::log(alpha / f); }

    double value_at_radius(double r) const {
        if (r >= alpha) return 1.0;
        if (r <= f) return 0.0;
        return std::log(r / f) / log_ratio();
    }
    J3 jet(Chart ch, cplx z) const {
        J3 e(1.0);
        for (auto& b : centers) {
            J3 r2 = mark_distance2(b, ch, z);
            double r = std::sqrt(r2.value());
            if (r >= alpha) continue;
            if (r <= f) return J3(0.0);
            e = e * ((log(r2) * 0.5 - std::log(f)) * (1.0 / log_ratio()));
        }
        return e;
    }
    // int |grad eta|^2 |dz|^2 around one center, Gauss-Legendre in log r
    double dirichlet(int nodes = 32) const {
        std::vector<double> x, w;
        gauss_legendre(nodes, x, w);
        double a = std::log(f), b = std::log(alpha), s = 0;
        for (int k = 0; k < nodes; ++k) {
            double u = 0.5 * (b - a) * x[k] + 0.5 * (b + a), r = std::exp(u);
            double deta = 1.0 / (r * log_ratio());
            s += 0.5 * (b - a) * w[k] * deta * deta * 2 * kPi * r * r;
        }
        return s;
    }
    double closed_form() const { return 2 * kPi / log_ratio(); }
};

inline LogCutoff log_cutoff(const BranchPoint& center, double alpha, double f_alpha) {
    return LogCutoff({center}, alpha, f_alpha);
}

// ---------- normal basis ----------

struct BasisMember {
    int l = 0, m = 0, k = 0;
    std::string label;
};

struct NormalBasis {
    std::vector<BasisMember> members;
    std::vector<NormalVariation> fields;
    std::vector<std::string> excluded;
};

inline std::vector<J3> profile_jets(const QuadratureGrid& g, const ScalarProfile& profile) {
    std::vector<J3> p(g.size());
    for (int i = 0; i < g.size(); ++i) p[i] = profile(g.nodes[i].chart, g.nodes[i].z);
    return p;
}

// Y_lm n (codimension one) or P(Y_lm e_k), times an optional profile given per node.
inline NormalVariation harmonic_field(const Immersion& im, int l, int m, int k, const std::vector<J3>* prof = nullptr) {
    const auto& g = *im.grid;
    auto u = harmonic_jets(g, l, m);
    if (prof)
        for (int i = 0; i < g.size(); ++i) u[i] = u[i] * (*prof)[i];
    std::string lab = "Y" + std::to_string(l) + "," + std::to_string(m);
    if (im.dim == 3) return scalar_normal_variation(im, u, lab + "*n");
    std::vector<VJet> V(im.size());
    for (int i = 0; i < im.size(); ++i) V[i].c[k] = u[i];
    return project_normal(im, V, lab + "*e" + std::to_string(k + 1));
}

inline int normal_components(const Immersion& im) { return im.dim == 3 ? 1 : im.dim; }

// l <= Lidx, all m, and one member per ambient axis in codimension two
inline NormalBasis normal_basis(const Immersion& im, int Lidx, const ScalarProfile* profile = nullptr) {
    if (Lidx < 0) throw ConfigError("index band must be nonnegative");
    NormalBasis B;
    std::vector<J3> prof;
    if (profile) prof = profile_jets(*im.grid, *profile);
    for (int l = 0; l <= Lidx; ++l)
        for (int m = -l; m <= l; ++m)
            for (int k = 0; k < normal_components(im); ++k) {
                B.fields.push_back(harmonic_field(im, l, m, k, profile ? &prof : nullptr));
                B.members.push_back({l, m, k, B.fields.back().label});
            }
    return B;
}

// ---------- quadratic forms ----------

struct QuadraticForm {
    EnergyKind energy = EnergyKind::W;
    double sigma = 0;
    const Immersion* im = nullptr;
    GeometryCache c;
    WSigmaEval ev;                        // used for Wsigma

    // for Wsigma: the local part D2W + sigma^2 D2F; the Onofri part is assembled separately
    double operator()(const NormalVariation& w) const {
        switch (energy) {
            case EnergyKind::W: return second_variation(*im, c, w);
            case EnergyKind::CW: return second_variation_cw(*im, c, w);
            default: return d2_w_sigma_parts(*im, ev, w, 0.0).value;
        }
    }
};

inline QuadraticForm make_quadratic_form(const Immersion& im, EnergyKind e, double sigma, const UniformizeOptions& opt) {
    QuadraticForm q;
    q.energy = e;
    q.sigma = sigma;
    q.im = &im;
    if (e == EnergyKind::Wsigma) {
        q.ev = w_sigma_eval(im, sigma, opt);
        q.c = q.ev.c;
    } else {
        q.c = geometry(im);
    }
    return q;
}

struct HessianAssembly {
    EnergyKind energy = EnergyKind::W;
    double sigma = 0;
    int Lidx = 0;
    std::vector<BasisMember> basis;
    std::vector<std::string> excluded;
    Eigen::MatrixXd A, M;
    double mass_min_eig = 0;
    double onofri_asymmetry = 0;   // relative antisymmetric part of the Onofri block before symmetrizing
};

struct AssemblyOptions {
    double sigma = 0;
    UniformizeOptions uopt;
    const ScalarProfile* profile = nullptr;   // defaults to the branch profile for branched surfaces
    double rho0 = 0.5;
};

inline HessianAssembly assemble_hessian(const Immersion& im, EnergyKind energy, int Lidx, const AssemblyOptions& opt = {}) {
    if (energy == EnergyKind::Wsigma) {
        require_unbranched(im);
        if (opt.sigma != 0.0) check_sigma(opt.sigma);
    }
    ScalarProfile bp;
    const ScalarProfile* prof = opt.profile;
    if (!prof && !im.surface->branches.empty()) {
        bp = branch_profile(im.surface->branches, opt.rho0);
        prof = &bp;
    }
    NormalBasis B = normal_basis(im, Lidx, prof);
    QuadraticForm Q = make_quadratic_form(im, energy, opt.sigma, opt.uopt);
    int n = int(B.fields.size());
    HessianAssembly H;
    H.energy = energy;
    H.sigma = opt.sigma;
    H.Lidx = Lidx;
    H.basis = B.members;
    H.excluded = B.excluded;
    H.A.resize(n, n);
    H.M.resize(n, n);
    for (int a = 0; a < n; ++a) {
        H.A(a, a) = Q(B.fields[a]);
        for (int b = 0; b < a; ++b) {
            double qp = Q(combine(B.fields[a], 1.0, B.fields[b], 1.0));
            double qm = Q(combine(B.fields[a], 1.0, B.fields[b], -1.0));
            H.A(a, b) = 0.25 * (qp - qm);
        }
    }
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < a; ++b) H.A(b, a) = H.A(a, b);
    if (energy == EnergyKind::Wsigma && Q.ev.has_onofri) {
        std::vector<const NormalVariation*> all;
        for (auto& f : B.fields) all.push_back(&f);
        Eigen::MatrixXd R(n, n);
        for (int a = 0; a < n; ++a) {
            auto row = onofri_hessian_row(im, B.fields[a], all, opt.uopt);
            for (int b = 0; b < n; ++b) R(a, b) = row.values[b];
        }
        H.onofri_asymmetry = (R - R.transpose()).norm() / std::max(R.norm(), 1e-300);
        H.A += onofri_weight(opt.sigma) * 0.5 * (R + R.transpose());
    }
    for (int a = 0; a < n; ++a)
        for (int b = 0; b <= a; ++b) {
            double s = 0;
            for (int i = 0; i < im.size(); ++i) {
                if (Q.c.excised[i]) continue;
                s += Q.c.vol(i) * B.fields[a].w[i].value().dot(B.fields[b].w[i].value());
            }
            H.M(a, b) = H.M(b, a) = s;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.M, Eigen::EigenvaluesOnly);
    H.mass_min_eig = n ? es.eigenvalues()[0] : 0.0;
    return H;
}

// Full polarization matrix including the upper triangle, to measure symmetry.
inline double polarization_asymmetry(const Immersion& im, EnergyKind energy, int Lidx, const AssemblyOptions& opt = {}) {
    if (energy == EnergyKind::Wsigma) throw ConfigError("polarization check supports W and CW");
    NormalBasis B = normal_basis(im, Lidx, opt.profile);
    QuadraticForm Q = make_quadratic_form(im, energy, opt.sigma, opt.uopt);
    int n = int(B.fields.size());
    Eigen::MatrixXd A(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b) {
                A(a, a) = Q(B.fields[a]);
                continue;
            }
            // w_b + w_a and w_b - w_a: different rounding from the (a, b) entry
            A(a, b) = 0.25 * (Q(combine(B.fields[b], 1.0, B.fields[a], 1.0)) - Q(combine(B.fields[b], 1.0, B.fields[a], -1.0)));
        }
    return (A - A.transpose()).norm() / std::max(A.norm(), 1e-300);
}

struct SpectrumReport {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;   // M-orthonormal columns
    int index = 0, nullity = 0, positive = 0;
    double tau = 0;
    int dimension = 0;
};

inline SpectrumReport morse_index(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M, double tau = -1) {
    if (A.rows() != A.cols() || M.rows() != M.cols() || A.rows() != M.rows()) throw ShapeError("pencil shape mismatch");
    SpectrumReport r;
    r.dimension = int(A.rows());
    if (r.dimension == 0) return r;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw AssemblyError("mass matrix is not positive definite");
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, M);
    if (es.info() != Eigen::Success) throw NumericalError("generalized eigensolver failed");
    r.eigenvalues = es.eigenvalues();
    r.eigenvectors = es.eigenvectors();
    double rad = r.eigenvalues.cwiseAbs().maxCoeff();
    r.tau = tau >= 0 ? tau : 1e-6 * rad;
    for (int k = 0; k < r.dimension; ++k) {
        double l = r.eigenvalues[k];
        if (l < -r.tau)
            ++r.index;
        else if (l <= r.tau)
            ++r.nullity;
        else
            ++r.positive;
    }
    return r;
}

inline SpectrumReport morse_index(const HessianAssembly& H, double tau = -1) { return morse_index(H.A, H.M, tau); }

// Eigenfield of column k of the spectrum.
inline NormalVariation eigenfield(const Immersion& im, int Lidx, const SpectrumReport& s, int k,
                                  const ScalarProfile* profile = nullptr) {
    NormalBasis B = normal_basis(im, Lidx, profile);
    NormalVariation w = scaled(B.fields[0], s.eigenvectors(0, k));
    for (std::size_t a = 1; a < B.fields.size(); ++a) w = combine(w, 1.0, B.fields[a], s.eigenvectors(int(a), k));
    w.label = "eig" + std::to_string(k);
    return w;
}

struct RayleighCheck {
    int k = 0;
    double eigenvalue = 0, rayleigh = 0, rel_error = 0;
};

// Second differences of W (or the curvature-subtracted energy) along the k smallest eigenfields.
// Eigenvalues at or below the nullity band are compared against the smallest nonnull |lambda|.
inline std::vector<RayleighCheck> rayleigh_crosscheck(const Immersion& im, EnergyKind energy, int Lidx,
                                                      const SpectrumReport& s, int count = 5) {
    if (energy == EnergyKind::Wsigma) throw ConfigError("Rayleigh cross-check supports W and CW");
    EnergyFn E = [energy](const Immersion& x) {
        auto c = geometry(x);
        auto e = energies(x, c);
        return energy == EnergyKind::W ? e.W : e.CW;
    };
    double scale = 0;
    for (int k = 0; k < s.dimension; ++k)
        if (std::abs(s.eigenvalues[k]) > s.tau && (scale == 0 || std::abs(s.eigenvalues[k]) < scale))
            scale = std::abs(s.eigenvalues[k]);
    std::vector<RayleighCheck> out;
    for (int k = 0; k < std::min(count, s.dimension); ++k) {
        NormalVariation w = eigenfield(im, Lidx, s, k);
        RayleighCheck r;
        r.k = k;
        r.eigenvalue = s.eigenvalues[k];
        r.rayleigh = fd_oracle(E, im, w, 2, 0.05).value;   // eigenvectors are M-normalized
        r.rel_error = std::abs(r.rayleigh - r.eigenvalue) / std::max(std::abs(r.eigenvalue), scale);
        out.push_back(r);
    }
    return out;
}

// ---------- localized index study ----------

struct CutoffRow {
    double alpha = 0, f = 0, log_ratio = 0;
    double eta_dirichlet = 0;      // quadrature
    double eta_closed_form = 0;    // 2 pi / log(alpha / f)
    double J1 = 0, J2 = 0, J3 = 0;
    double cutoff_error = 0;       // |int over the annulus of Q(eta w)|
};

struct LocalizedIndexReport {
    std::vector<CutoffRow> rows;
    bool decreasing = true;        // J1, J2, J3 and the cutoff error along decreasing alpha
    double j3_fit_constant = 0;    // least squares J3 ~ c / log(alpha / f)
    double j3_fit_max_rel = 0;
};

// w = u n with the scalar u given in the marked point's chart; alphas decreasing, f(alpha) supplied.
inline LocalizedIndexReport localized_index_study(SurfacePtr s, const std::vector<BranchPoint>& marks,
                                                  const std::function<J3(Chart, cplx)>& u,
                                                  const std::vector<double>& alphas,
                                                  const std::function<double(double)>& f_of_alpha, int nr = 48,
                                                  int nt = 96) {
    if (s->dim != 3) throw ConfigError("localized study uses scalar normal probes in R^3");
    std::vector<double> xs, ws;
    gauss_legendre(nr, xs, ws);
    LocalizedIndexReport rep;
    for (double a : alphas) {
        double fa = f_of_alpha(a);
        LogCutoff eta({}, a, fa);
        CutoffRow row;
        row.alpha = a;
        row.f = fa;
        row.log_ratio = eta.log_ratio();
        row.eta_dirichlet = eta.dirichlet();
        row.eta_closed_form = eta.closed_form();
        if (marks.empty()) {
            // eta = 1 everywhere: nothing is cut
            row.eta_dirichlet = row.eta_closed_form = 0.0;
            rep.rows.push_back(row);
            continue;
        }
        double lo = std::log(fa), hi = std::log(a);
        for (auto& b : marks) {
            LogCutoff eta1({b}, a, fa);
            for (int k = 0; k < nr; ++k) {
                double lr = 0.5 * (hi - lo) * xs[k] + 0.5 * (hi + lo), r = std::exp(lr);
                for (int j = 0; j < nt; ++j) {
                    double t = 2 * kPi * (j + 0.5) / nt;
                    cplx z = b.z + std::polar(r, t);
                    VJet phi = s->jet(b.chart, z);
                    auto G = local_geometry(phi, 3);
                    auto n = unit_normal_jet(phi);
                    J2 ue = truncate<2>(u(b.chart, z) * eta1.jet(b.chart, z));
                    VJet w;
                    for (int c = 0; c < 3; ++c) w.c[c] = promote(ue * n[c]);
                    VarLocal v = var_local(G, w);
                    // r dr dtheta = r^2 d(log r) dtheta
                    double dvol = G.sqrtg * r * r * 0.5 * (hi - lo) * ws[k] * (2 * kPi / nt);
                    double hess2 = 0;
                    for (int i1 = 0; i1 < 2; ++i1)
                        for (int j1 = 0; j1 < 2; ++j1)
                            for (int k1 = 0; k1 < 2; ++k1)
                                for (int l1 = 0; l1 < 2; ++l1)
                                    hess2 += G.gi(i1, k1) * G.gi(j1, l1) * v.hess[i1][j1].dot(v.hess[k1][l1]);
                    double Hn = G.H.norm(), IIn = std::sqrt(std::max(0.0, G.II_norm2()));
                    row.J1 += std::sqrt(std::max(0.0, hess2)) * Hn * dvol;
                    row.J2 += v.dw2 * Hn * IIn * dvol;
                    row.J3 += normal_laplacian_direct(G, phi, w, 3).squaredNorm() * dvol;
                    auto d = densities(G, v, phi, w, 3, true);
                    row.cutoff_error += (d.d2h2 + 2 * d.dh2 * d.dvol1 + d.h2 * d.dvol2) * dvol;
                }
            }
        }
        row.cutoff_error = std::abs(row.cutoff_error);
        rep.rows.push_back(row);
    }
    for (std::size_t k = 1; k < rep.rows.size(); ++k) {
        auto& p = rep.rows[k - 1];
        auto& q = rep.rows[k];
        if (q.J1 > p.J1 || q.J2 > p.J2 || q.J3 > p.J3 || q.cutoff_error > p.cutoff_error) rep.decreasing = false;
    }
    double sxy = 0, sxx = 0;
    for (auto& r : rep.rows) {
        double x = 1.0 / r.log_ratio;
        sxy += x * r.J3;
        sxx += x * x;
    }
    rep.j3_fit_constant = sxx > 0 ? sxy / sxx : 0.0;
    for (auto& r : rep.rows) {
        double m = rep.j3_fit_constant / r.log_ratio;
        rep.j3_fit_max_rel = std::max(rep.j3_fit_max_rel, std::abs(r.J3 - m) / std::max(std::abs(r.J3), 1e-300));
    }
    return rep;
}

}  // namespace wlab
