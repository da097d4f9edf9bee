#pragma once

#include "geometry.hpp"

namespace wlab {

using J1 = Jet<1>;
using J2 = Jet<2>;

template <int M>
J3 promote(const Jet<M>& a) {
    J3 r;
    for (int d = 0; d <= M; ++d)
        for (int j = 0; j <= d; ++j) r.c[J3::idx(d - j, j)] = a.c[Jet<M>::idx(d - j, j)];
    return r;
}

struct NormalVariation {
    std::string label;
    std::vector<VJet> w;  // valid to second order
};

struct PreconditionError : std::runtime_error { using std::runtime_error::runtime_error; };

// Chart derivative jets of the immersion, one order lower.
inline std::array<std::array<J2, 4>, 2> tangent_jets(const VJet& phi) {
    std::array<std::array<J2, 4>, 2> e;
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 4; ++k) e[i][k] = partial(phi.c[k], i);
    return e;
}

// Normal projector as second-order jets.
inline std::array<std::array<J2, 4>, 4> normal_projector_jet(const VJet& phi, int dim) {
    auto e = tangent_jets(phi);
    J2 g00, g01, g11;
    for (int k = 0; k < dim; ++k) {
        g00 += e[0][k] * e[0][k];
        g01 += e[0][k] * e[1][k];
        g11 += e[1][k] * e[1][k];
    }
    J2 idet = inv(g00 * g11 - g01 * g01);
    J2 i00 = g11 * idet, i01 = -(g01 * idet), i11 = g00 * idet;
    std::array<std::array<J2, 4>, 4> P;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            J2 v = (a == b && a < dim) ? J2(1.0) : J2(0.0);
            v -= i00 * e[0][a] * e[0][b] + i01 * (e[0][a] * e[1][b] + e[1][a] * e[0][b]) + i11 * e[1][a] * e[1][b];
            P[a][b] = v;
        }
    return P;
}

inline std::array<J2, 4> unit_normal_jet(const VJet& phi) {
    auto e = tangent_jets(phi);
    std::array<J2, 4> n;
    n[0] = e[0][1] * e[1][2] - e[0][2] * e[1][1];
    n[1] = e[0][2] * e[1][0] - e[0][0] * e[1][2];
    n[2] = e[0][0] * e[1][1] - e[0][1] * e[1][0];
    J2 il = inv(sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]));
    for (int k = 0; k < 3; ++k) n[k] = n[k] * il;
    return n;
}

// w = u n for hypersurfaces, u given as jets per node.
inline NormalVariation scalar_normal_variation(const Immersion& im, const std::vector<J3>& u, std::string label = {}) {
    if (im.dim != 3) throw PreconditionError("scalar normal variations need codimension one");
    NormalVariation v;
    v.label = std::move(label);
    v.w.resize(im.size());
    for (int i = 0; i < im.size(); ++i) {
        auto n = unit_normal_jet(im.jets[i]);
        J2 u2 = truncate<2>(u[i]);
        for (int k = 0; k < 3; ++k) v.w[i].c[k] = promote(u2 * n[k]);
    }
    return v;
}

// Pointwise orthogonal projection of an ambient field onto the normal bundle.
inline NormalVariation project_normal(const Immersion& im, const std::vector<VJet>& V, std::string label = {}) {
    NormalVariation v;
    v.label = std::move(label);
    v.w.resize(im.size());
    for (int i = 0; i < im.size(); ++i) {
        auto P = normal_projector_jet(im.jets[i], im.dim);
        for (int a = 0; a < im.dim; ++a) {
            J2 s;
            for (int b = 0; b < im.dim; ++b) s += P[a][b] * truncate<2>(V[i].c[b]);
            v.w[i].c[a] = promote(s);
        }
    }
    return v;
}

inline std::vector<J3> harmonic_jets(const QuadratureGrid& g, int l, int m) {
    std::vector<J3> u(g.size());
    for (int i = 0; i < g.size(); ++i) u[i] = sh_eval_jets<3>(l, g.nodes[i].chart, g.nodes[i].z)[sh_index(l, m)];
    return u;
}

// Y_lm n for hypersurfaces, P(Y_lm e_k) otherwise.
inline NormalVariation harmonic_probe(const Immersion& im, int l, int m, int k = 0) {
    auto u = harmonic_jets(*im.grid, l, m);
    std::string lab = "Y" + std::to_string(l) + "," + std::to_string(m);
    if (im.dim == 3 && k == 0) return scalar_normal_variation(im, u, lab + "*n");
    std::vector<VJet> V(im.size());
    for (int i = 0; i < im.size(); ++i) V[i].c[k] = u[i];
    return project_normal(im, V, lab + "*e" + std::to_string(k + 1));
}

inline NormalVariation scaled(const NormalVariation& a, double s) {
    NormalVariation r = a;
    for (auto& x : r.w) x *= s;
    return r;
}
inline NormalVariation combine(const NormalVariation& a, double sa, const NormalVariation& b, double sb) {
    NormalVariation r = a;
    for (std::size_t i = 0; i < r.w.size(); ++i) {
        r.w[i] *= sa;
        r.w[i] += sb * b.w[i];
    }
    return r;
}

// Pointwise first and second order data of a normal variation.
struct VarLocal {
    Vec w;
    std::array<Vec, 2> dw;
    Vec hess[2][2];          // covariant Hessian of the ambient components
    Eigen::Matrix2d a, b;    // a_ij = <phi_i, w_j>, b_ij = <w_i, w_j>
    double trA = 0, trA2 = 0, dw2 = 0, wp16 = 0;
    Vec lap;                 // Delta_g w
    Vec Aw;                  // Simons operator
    Vec Lw;                  // Delta^perp w + A(w)
    double normality = 0;    // max |<w, phi_i>| / |phi_i|
};

inline Vec simons(const LocalGeometry& G, const Vec& w) {
    Vec r = Vec::Zero();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) r += G.gi(i, k) * G.gi(j, l) * G.II[i][j].dot(w) * G.II[k][l];
    return r;
}

// 2<H,w>H + 2 Re(<conj h0, w> h0) in the orthonormal frame
inline Vec simons_expansion(const LocalGeometry& G, const Vec& w) {
    auto [hr, hi] = G.h0();
    return 2 * G.H.dot(w) * G.H + 2 * (hr.dot(w) * hr + hi.dot(w) * hi);
}

inline VarLocal var_local(const LocalGeometry& G, const VJet& W) {
    VarLocal v;
    v.w = W.value();
    v.dw[0] = W.d(1, 0);
    v.dw[1] = W.d(0, 1);
    Vec w2[2][2] = {{W.d(2, 0), W.d(1, 1)}, {W.d(1, 1), W.d(0, 2)}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            v.a(i, j) = G.e[i].dot(v.dw[j]);
            v.b(i, j) = v.dw[i].dot(v.dw[j]);
            v.hess[i][j] = w2[i][j] - G.Gam[0][i][j] * v.dw[0] - G.Gam[1][i][j] * v.dw[1];
        }
    Eigen::Matrix2d A = G.gi * v.a;
    v.trA = A.trace();
    v.trA2 = (A * A).trace();
    v.dw2 = (G.gi * v.b).trace();
    v.wp16 = 2 * v.trA2 - v.trA * v.trA;
    v.lap = Vec::Zero();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) v.lap += G.gi(i, j) * v.hess[i][j];
    v.Aw = simons(G, v.w);
    v.Lw = G.Pn * v.lap + 2 * v.Aw;
    v.normality = std::max(std::abs(v.w.dot(G.e[0])) / G.e[0].norm(), std::abs(v.w.dot(G.e[1])) / G.e[1].norm());
    return v;
}

// Normal Laplacian from the normal connection, independent of the Simons identity.
inline Vec normal_laplacian_direct(const LocalGeometry& G, const VJet& phi, const VJet& W, int dim) {
    auto P = normal_projector_jet(phi, dim);
    // V_j = P w_j as first-order jets
    std::array<std::array<J1, 4>, 2> V;
    for (int j = 0; j < 2; ++j)
        for (int a = 0; a < 4; ++a) {
            J1 s;
            for (int b = 0; b < dim; ++b) s += truncate<1>(P[a][b]) * truncate<1>(partial(W.c[b], j));
            V[j][a] = s;
        }
    Vec out = Vec::Zero();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            Vec dV;
            for (int a = 0; a < 4; ++a) dV[a] = V[j][a].d(i == 0 ? 1 : 0, i == 1 ? 1 : 0);
            Vec t = G.Pn * dV;
            for (int k = 0; k < 2; ++k) {
                Vec Vk(V[k][0].value(), V[k][1].value(), V[k][2].value(), V[k][3].value());
                t -= G.Gam[k][i][j] * Vk;
            }
            out += G.gi(i, j) * t;
        }
    return out;
}

// frame derivatives w_a = D_{E_a} w
inline std::array<Vec, 2> frame_derivs(const LocalGeometry& G, const std::array<Vec, 2>& d) {
    return {G.Ec(0, 0) * d[0] + G.Ec(1, 0) * d[1], G.Ec(0, 1) * d[0] + G.Ec(1, 1) * d[1]};
}

struct CVec {
    Vec re = Vec::Zero(), im = Vec::Zero();
};
inline std::complex<double> cdot(const CVec& a, const CVec& b) {
    return {a.re.dot(b.re) - a.im.dot(b.im), a.re.dot(b.im) + a.im.dot(b.re)};
}
inline CVec del(const std::array<Vec, 2>& f) { return {0.5 * f[0], -0.5 * f[1]}; }     // d_z
inline CVec delbar(const std::array<Vec, 2>& f) { return {0.5 * f[0], 0.5 * f[1]}; }   // d_zbar

// 4 Re{ <dbar phi, dbar w> h0 + <d phi, dbar w> H } in the orthonormal frame (printed correction term)
inline Vec normal_laplacian_correction(const LocalGeometry& G, const VarLocal& v) {
    std::array<Vec, 2> E = {G.Ec(0, 0) * G.e[0] + G.Ec(1, 0) * G.e[1], G.Ec(0, 1) * G.e[0] + G.Ec(1, 1) * G.e[1]};
    auto wa = frame_derivs(G, v.dw);
    auto [hr, hi] = G.h0();
    cplx c1 = cdot(delbar(E), delbar(wa));
    cplx c2 = cdot(del(E), delbar(wa));
    Vec re = c1.real() * hr - c1.imag() * hi + c2.real() * G.H;
    return 4 * re;
}

// Normal Laplacian via the identity with the sign of the correction term fixed.
inline Vec normal_laplacian_identity(const LocalGeometry& G, const VarLocal& v) {
    return G.Pn * v.lap - normal_laplacian_correction(G, v);
}

// Real one-form coefficients in the orthonormal coframe for Im(c dz): (Im c, Re c).
inline Eigen::Vector2d im_form(cplx c) { return {c.imag(), c.real()}; }

// Im(2<H, dw> - 2 g^{-1}(h0 . dbar w)): d/dt(K dvol) = d of this form (frame components)
inline Eigen::Vector2d dK_form_frame(const LocalGeometry& G, const VarLocal& v) {
    auto wa = frame_derivs(G, v.dw);
    auto [hr, hi] = G.h0();
    CVec H{G.H, Vec::Zero()}, h0{hr, hi};
    cplx c = 2.0 * cdot(H, del(wa)) - 2.0 * cdot(h0, delbar(wa));
    return im_form(c);
}

// frame components -> chart components
inline Eigen::Vector2d frame_to_chart(const LocalGeometry& G, const Eigen::Vector2d& f) {
    Eigen::Matrix2d th = G.Ec.inverse();  // theta^a(e_i) = th(a, i)
    return th.transpose() * f;
}
inline Eigen::Vector2d chart_to_frame(const LocalGeometry& G, const Eigen::Vector2d& f) {
    return G.Ec.transpose() * f;
}

// |nabla^perp w|_g^2 and its chart gradient
inline std::pair<double, Eigen::Vector2d> normal_grad_norm2(const VJet& phi, const VJet& W, int dim) {
    auto P = normal_projector_jet(phi, dim);
    auto e = tangent_jets(phi);
    std::array<std::array<J1, 4>, 2> V;
    for (int j = 0; j < 2; ++j)
        for (int a = 0; a < 4; ++a) {
            J1 s;
            for (int b = 0; b < dim; ++b) s += truncate<1>(P[a][b]) * truncate<1>(partial(W.c[b], j));
            V[j][a] = s;
        }
    J1 g00, g01, g11;
    for (int k = 0; k < dim; ++k) {
        J1 a = truncate<1>(e[0][k]), b = truncate<1>(e[1][k]);
        g00 += a * a;
        g01 += a * b;
        g11 += b * b;
    }
    J1 idet = inv(g00 * g11 - g01 * g01);
    J1 f;
    for (int a = 0; a < 4; ++a) f += idet * (g11 * V[0][a] * V[0][a] - g01 * V[0][a] * V[1][a] * 2.0 + g00 * V[1][a] * V[1][a]);
    return {f.value(), Eigen::Vector2d(f.d(1, 0), f.d(0, 1))};
}

// Printed second-order form: d^2/dt^2 (K dvol) = d of this form (frame components).
inline Eigen::Vector2d d2K_form_frame(const LocalGeometry& G, const VarLocal& v, const VJet& phi, const VJet& W, int dim) {
    std::array<Vec, 2> E = {G.Ec(0, 0) * G.e[0] + G.Ec(1, 0) * G.e[1], G.Ec(0, 1) * G.e[0] + G.Ec(1, 1) * G.e[1]};
    auto wa = frame_derivs(G, v.dw);
    auto [hr, hi] = G.h0();
    CVec H{G.H, Vec::Zero()}, h0{hr, hi};
    Vec lperp = normal_laplacian_direct(G, phi, W, dim);
    cplx c1 = cdot(delbar(E), delbar(wa));
    Vec corr = 4 * (c1.real() * hr - c1.imag() * hi);
    CVec first{lperp + corr, Vec::Zero()};
    auto [f, df] = normal_grad_norm2(phi, W, dim);
    Eigen::Vector2d dfa = chart_to_frame(G, df);
    cplx delf(0.5 * dfa[0], -0.5 * dfa[1]);
    cplx k1 = cdot(H, del(wa)) - cdot(h0, delbar(wa));
    cplx c = 2.0 * cdot(first, del(wa)) - delf - 2.0 * v.trA * k1 - 8.0 * cdot(del(E), del(wa)) * cdot(H, delbar(wa));
    return im_form(c);
}

// ---------- exact t-derivatives of pointwise densities along phi + t w ----------

struct TVec {
    std::array<TPoly, 4> c;
};
inline TPoly tdot(const TVec& a, const TVec& b, int dim) {
    TPoly s;
    for (int k = 0; k < dim; ++k) s += a.c[k] * b.c[k];
    return s;
}

struct TLocal {
    TPoly sqrtg, K, H2;
};

inline TLocal t_local(const VJet& phi, const VJet& W, int dim) {
    auto mk = [&](int i, int j) {
        TVec r;
        for (int k = 0; k < 4; ++k) r.c[k] = TPoly(phi.c[k].d(i, j), W.c[k].d(i, j), 0.0);
        return r;
    };
    TVec e0 = mk(1, 0), e1 = mk(0, 1), p00 = mk(2, 0), p01 = mk(1, 1), p11 = mk(0, 2);
    TPoly g00 = tdot(e0, e0, dim), g01 = tdot(e0, e1, dim), g11 = tdot(e1, e1, dim);
    TPoly det = g00 * g11 - g01 * g01;
    TPoly idet = inv(det);
    TPoly i00 = g11 * idet, i01 = -(g01 * idet), i11 = g00 * idet;
    auto pdot = [&](const TVec& a, const TVec& b) {
        TPoly ae0 = tdot(a, e0, dim), ae1 = tdot(a, e1, dim), be0 = tdot(b, e0, dim), be1 = tdot(b, e1, dim);
        return tdot(a, b, dim) - (i00 * ae0 * be0 + i01 * (ae0 * be1 + ae1 * be0) + i11 * ae1 * be1);
    };
    TLocal r;
    r.sqrtg = sqrt(det);
    r.K = (pdot(p00, p11) - pdot(p01, p01)) * idet;
    TVec D;
    for (int k = 0; k < 4; ++k) D.c[k] = i00 * p00.c[k] + TPoly(2.0) * i01 * p01.c[k] + i11 * p11.c[k];
    r.H2 = TPoly(0.25) * pdot(D, D);
    return r;
}

// ---------- energies ----------

struct EnergyBreakdown {
    double W = 0, CW = 0, F = 0, area = 0, totalK = 0;
};

inline EnergyBreakdown energies(const Immersion& im, const GeometryCache& c) {
    EnergyBreakdown e;
    e.W = integrate_with_branches(c, im, [&](int i) { return c.pts[i].H.squaredNorm(); });
    e.totalK = integrate_with_branches(c, im, [&](int i) { return c.pts[i].K; });
    e.F = integrate_vol(c, [&](int i) { double h = 1 + c.pts[i].H.squaredNorm(); return h * h; });
    e.area = integrate_with_branches(c, im, [](int) { return 1.0; });
    e.CW = e.W - e.totalK;
    return e;
}

inline double willmore_energy(const Immersion& im) { auto c = geometry(im); return energies(im, c).W; }

inline void require_normal(const VarLocal& v, double scale) {
    if (v.normality > 1e-8 * (1 + scale)) throw PreconditionError("variation is not normal");
}

// Second derivative of |H|^2 along phi + t w.
inline double d2_h2(const LocalGeometry& G, const VarLocal& v, const VJet& phi, const VJet& W, int dim) {
    auto e = tangent_jets(phi);
    std::array<std::array<J1, 4>, 2> E1, W1;
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 4; ++k) {
            E1[i][k] = truncate<1>(e[i][k]);
            W1[i][k] = truncate<1>(partial(W.c[k], i));
        }
    J1 g[2][2], a[2][2];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            for (int k = 0; k < dim; ++k) {
                g[i][j] += E1[i][k] * E1[j][k];
                a[i][j] += E1[i][k] * W1[j][k];
            }
        }
    J1 idet = inv(g[0][0] * g[1][1] - g[0][1] * g[0][1]);
    J1 gi[2][2] = {{g[1][1] * idet, -(g[0][1] * idet)}, {-(g[0][1] * idet), g[0][0] * idet}};
    J1 tr;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) tr += gi[i][j] * a[i][j];
    double dtr[2] = {tr.d(1, 0), tr.d(0, 1)};
    // div a_j = g^{ki} nabla_k a_ij
    double diva[2] = {0, 0};
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i) {
                double cov = a[i][j].d(k == 0 ? 1 : 0, k == 1 ? 1 : 0);
                for (int m = 0; m < 2; ++m) cov -= G.Gam[m][k][i] * v.a(m, j) + G.Gam[m][k][j] * v.a(i, m);
                diva[j] += G.gi(k, i) * cov;
            }
    double vec[2] = {2 * diva[0] - dtr[0], 2 * diva[1] - dtr[1]};
    Eigen::Matrix2d up_a = G.gi * v.a * G.gi, up_b = G.gi * v.b * G.gi, up_aga = G.gi * v.a * G.gi * v.a * G.gi;
    double t1 = 0, t3 = 0, t4 = 0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            t1 += up_a(i, j) * G.H.dot(v.hess[i][j]);
            double hii = G.H.dot(G.II[i][j]);
            t3 += up_b(i, j) * hii;
            t4 += up_aga(i, j) * hii;
        }
    double t2 = 0;
    Vec vt = Vec::Zero();
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) {
            t2 += vec[k] * G.gi(k, l) * v.dw[l].dot(G.H);
            vt += G.gi(l, k) * vec[k] * G.e[l];
        }
    double xpp_h = -4 * t1 - 2 * t2 - 2 * t3 + 8 * t4;
    Vec xtan = (v.lap - G.Pn * v.lap) - vt;
    return xpp_h + 0.5 * v.Lw.squaredNorm() + 0.5 * xtan.squaredNorm();
}

struct VariationDensities {
    double h2 = 0, dh2 = 0, d2h2 = 0, dvol1 = 0, dvol2 = 0;
};

inline VariationDensities densities(const LocalGeometry& G, const VarLocal& v, const VJet& phi, const VJet& W, int dim,
                                    bool second) {
    VariationDensities d;
    d.h2 = G.H.squaredNorm();
    d.dh2 = v.Lw.dot(G.H);
    d.dvol1 = v.trA;
    d.dvol2 = v.dw2 - v.wp16;
    if (second) d.d2h2 = d2_h2(G, v, phi, W, dim);
    return d;
}

struct VariationValues {
    double DW = 0, D2W = 0, DF = 0, D2F = 0, Darea = 0, D2area = 0;
};

inline VariationValues variations(const Immersion& im, const GeometryCache& c, const NormalVariation& w, bool second = true,
                                  bool check_normal = true) {
    if (int(w.w.size()) != im.size()) throw ShapeError("variation does not match immersion");
    VariationValues r;
    for (int i = 0; i < im.size(); ++i) {
        if (c.excised[i]) continue;
        const auto& G = c.pts[i];
        VarLocal v = var_local(G, w.w[i]);
        if (check_normal) require_normal(v, v.w.norm() + v.dw[0].norm() + v.dw[1].norm());
        auto d = densities(G, v, im.jets[i], w.w[i], im.dim, second);
        double dv = c.vol(i);
        double q = 1 + d.h2;
        r.DW += dv * (d.dh2 + d.h2 * d.dvol1);
        r.DF += dv * (2 * q * d.dh2 + q * q * d.dvol1);
        r.Darea += dv * d.dvol1;
        if (second) {
            r.D2W += dv * (d.d2h2 + 2 * d.dh2 * d.dvol1 + d.h2 * d.dvol2);
            r.D2F += dv * (2 * d.dh2 * d.dh2 + 2 * q * d.d2h2 + 4 * q * d.dh2 * d.dvol1 + q * q * d.dvol2);
            r.D2area += dv * d.dvol2;
        }
    }
    return r;
}

inline double first_variation(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    return variations(im, c, w, false).DW;
}
inline double second_variation(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    return variations(im, c, w, true).D2W;
}

// Exact second t-derivative of the integrated Gauss curvature; zero on closed surfaces.
inline double d2_total_curvature(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    double s = 0;
    for (int i = 0; i < im.size(); ++i) {
        if (c.excised[i]) continue;
        TLocal t = t_local(im.jets[i], w.w[i], im.dim);
        s += c.dA[i] * (t.K * t.sqrtg).d2();
    }
    return s;
}

inline double second_variation_cw(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    return second_variation(im, c, w) - d2_total_curvature(im, c, w);
}

struct NormalField {
    std::vector<Vec> v;
};

inline NormalField simons_operator(const GeometryCache& c, const NormalVariation& w) {
    NormalField r;
    r.v.resize(c.size());
    for (int i = 0; i < c.size(); ++i) r.v[i] = simons(c.pts[i], w.w[i].value());
    return r;
}

inline NormalField jacobi_operator(const GeometryCache& c, const NormalVariation& w) {
    NormalField r;
    r.v.resize(c.size());
    for (int i = 0; i < c.size(); ++i) r.v[i] = var_local(c.pts[i], w.w[i]).Lw;
    return r;
}

inline NormalField normal_laplacian(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    NormalField r;
    r.v.resize(c.size());
    for (int i = 0; i < c.size(); ++i) r.v[i] = normal_laplacian_direct(c.pts[i], im.jets[i], w.w[i], im.dim);
    return r;
}

inline double normal_laplacian_identity_residual(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    double res = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        VarLocal v = var_local(c.pts[i], w.w[i]);
        Vec direct = normal_laplacian_direct(c.pts[i], im.jets[i], w.w[i], im.dim);
        res = std::max(res, (direct - normal_laplacian_identity(c.pts[i], v)).cwiseAbs().maxCoeff());
    }
    return res;
}

struct OneForm {
    std::vector<Eigen::Vector2d> chart;  // components along dx, dy of each node's chart
    std::vector<Eigen::Vector2d> frame;  // components in the orthonormal coframe
};

inline OneForm dK_dvol_form(const GeometryCache& c, const NormalVariation& w) {
    OneForm f;
    f.chart.resize(c.size());
    f.frame.resize(c.size());
    for (int i = 0; i < c.size(); ++i) {
        f.frame[i] = dK_form_frame(c.pts[i], var_local(c.pts[i], w.w[i]));
        f.chart[i] = frame_to_chart(c.pts[i], f.frame[i]);
    }
    return f;
}

inline OneForm d2K_dvol_form(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    OneForm f;
    f.chart.resize(c.size());
    f.frame.resize(c.size());
    for (int i = 0; i < c.size(); ++i) {
        f.frame[i] = d2K_form_frame(c.pts[i], var_local(c.pts[i], w.w[i]), im.jets[i], w.w[i], im.dim);
        f.chart[i] = frame_to_chart(c.pts[i], f.frame[i]);
    }
    return f;
}

// integral of d(eta) ^ omega, eta given by its chart gradient per node
inline double wedge_integral(const GeometryCache& c, const std::vector<Eigen::Vector2d>& deta, const OneForm& f) {
    double s = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        Eigen::Vector2d ea = chart_to_frame(c.pts[i], deta[i]);
        s += c.vol(i) * (ea[0] * f.frame[i][1] - ea[1] * f.frame[i][0]);
    }
    return s;
}

struct VolumeDerivatives {
    std::vector<double> first, second;  // densities per unit area
    double total_first = 0, total_second = 0;
};

inline VolumeDerivatives volume_form_derivatives(const GeometryCache& c, const NormalVariation& w) {
    VolumeDerivatives r;
    r.first.resize(c.size());
    r.second.resize(c.size());
    for (int i = 0; i < c.size(); ++i) {
        VarLocal v = var_local(c.pts[i], w.w[i]);
        r.first[i] = v.trA;
        r.second[i] = v.dw2 - v.wp16;
        r.total_first += c.vol(i) * r.first[i];
        r.total_second += c.vol(i) * r.second[i];
    }
    return r;
}

struct EnergyNorm {
    double l2_w = 0, l2_dw = 0, l2_lap = 0, sup_dw = 0, value = 0;
};

inline EnergyNorm energy_norm(const Immersion& im, const GeometryCache& c, const NormalVariation& w) {
    EnergyNorm n;
    double s = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        VarLocal v = var_local(c.pts[i], w.w[i]);
        Vec lp = normal_laplacian_direct(c.pts[i], im.jets[i], w.w[i], im.dim);
        n.l2_w += c.vol(i) * v.w.squaredNorm();
        n.l2_dw += c.vol(i) * v.dw2;
        n.l2_lap += c.vol(i) * lp.squaredNorm();
        n.sup_dw = std::max(n.sup_dw, std::sqrt(std::max(0.0, v.dw2)));
    }
    s = n.l2_w + n.l2_dw + n.l2_lap;
    n.l2_w = std::sqrt(n.l2_w);
    n.l2_dw = std::sqrt(n.l2_dw);
    n.l2_lap = std::sqrt(n.l2_lap);
    n.value = std::sqrt(s) + n.sup_dw;
    return n;
}

// |DW(w)| <= sqrt(W) |Delta^perp w|_2 + (6W - 2 pi chi) |dw|_inf
inline double dw_bound(double W, const EnergyNorm& n, double chi = 2.0) {
    return std::sqrt(W) * n.l2_lap + (6 * W - 2 * kPi * chi) * n.sup_dw;
}

// ---------- branched disk weighted Hessian ----------

struct WeightedHessianReport {
    double value = 0;
    double lap_perp_l2 = 0;     // int |Delta_g^perp w|^2 dvol
    double weight_factor = 0;   // 1 / ((theta0 - 1) - a)
    double h0_energy = 0;
    double sup_dw = 0;
};

// int_{|z|<1/2} |grad^2 w|^2 / |z|^{2a} |dz|^2 for w = u(z) e3 on a flat branched disk
inline WeightedHessianReport weighted_hessian_integral(SurfacePtr disk, const std::function<J3(cplx)>& u, double a) {
    if (disk->kind != "branched_disk") throw ConfigError("weighted Hessian integral needs a branched disk");
    int th = int(disk->params[0]);
    if (!(a >= 0) || a >= th - 1) throw DomainError("weight exponent must satisfy 0 <= a < theta0 - 1");
    WeightedHessianReport r;
    r.weight_factor = 1.0 / ((th - 1) - a);
    const double R = 0.5;
    std::vector<double> xs, ws;
    gauss_legendre(48, xs, ws);
    int nth = 96;
    // r = R s^{1/(2-2a)} absorbs the weight: r^{1-2a} dr = R^{2-2a} ds / (2-2a)
    double pw = 1.0 / (2 - 2 * a);
    for (int k = 0; k < 48; ++k) {
        double s = 0.5 * (xs[k] + 1), ws_ = 0.5 * ws[k];
        double rr = R * std::pow(s, pw);
        for (int j = 0; j < nth; ++j) {
            double t = 2 * kPi * (j + 0.5) / nth;
            cplx z = std::polar(rr, t);
            J3 uj = u(z);
            double hxx = uj.d(2, 0), hxy = uj.d(1, 1), hyy = uj.d(0, 2);
            double hess2 = hxx * hxx + 2 * hxy * hxy + hyy * hyy;
            double jac = std::pow(R, 2 - 2 * a) / (2 - 2 * a) * ws_ * (2 * kPi / nth);
            r.value += hess2 * jac;
            // metric of the flat branched disk: e^{2 lambda} = theta0^2 |z|^{2 theta0 - 2}
            double e2l = th * th * std::pow(rr, 2 * th - 2);
            double lapflat = hxx + hyy;
            double lap = lapflat / e2l;
            double area_w = std::pow(R, 2 - 2 * a) / (2 - 2 * a) * ws_ * (2 * kPi / nth) * std::pow(rr, 2 * a);
            r.lap_perp_l2 += lap * lap * e2l * area_w;
            double gx = uj.d(1, 0), gy = uj.d(0, 1);
            r.sup_dw = std::max(r.sup_dw, std::sqrt((gx * gx + gy * gy) / e2l));
        }
    }
    r.h0_energy = 0.0;
    return r;
}

}  // namespace wlab
