#pragma once

#include "fd_oracle.hpp"
#include "uniformization.hpp"

namespace wlab {

struct OnofriBreakdown {
    double dirichlet = 0;  // 1/2 int |d alpha|^2
    double zeroth = 0;     // K_g0 int alpha e^{-2 alpha} dvol_g
    double logvol = 0;     // -(K_g0/2) log area
    double total = 0;
    double dirichlet_full = 0;  // int |d alpha|^2
    bool gauged = false;
};

inline OnofriBreakdown onofri_energy(const GeometryCache& c, const ConformalFactor& cf) {
    OnofriBreakdown o;
    double area = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        double v = c.vol(i);
        o.dirichlet_full += v * cf.dalpha[i].dot(c.pts[i].gi * cf.dalpha[i]);
        o.zeroth += v * cf.alpha[i] * std::exp(-2 * cf.alpha[i]);
        area += v;
    }
    o.dirichlet = 0.5 * o.dirichlet_full;
    o.zeroth *= kKg0;
    o.logvol = -0.5 * kKg0 * std::log(area);
    o.total = o.dirichlet + o.zeroth + o.logvol;
    o.gauged = cf.gauged;
    return o;
}

// Relative accuracy of one Onofri evaluation through the Newton uniformization (measured jitter about 3e-13).
inline constexpr double kOnofriNoise = 1e-12;

// Onofri energy of an immersion with a fresh uniformization.
inline double onofri_value(const Immersion& im, const UniformizeOptions& opt = {}) {
    auto c = geometry(im);
    return onofri_energy(c, conformal_factor(im, c, opt)).total;
}

// chart gradient to the vector g^{-1} d alpha
inline Eigen::Vector2d raise(const LocalGeometry& G, const Eigen::Vector2d& df) { return G.gi * df; }

// d f ^ omega with omega given by frame components, per unit volume
inline double wedge_density(const LocalGeometry& G, const Eigen::Vector2d& df, const Eigen::Vector2d& omega_frame) {
    Eigen::Vector2d fa = chart_to_frame(G, df);
    return fa[0] * omega_frame[1] - fa[1] * omega_frame[0];
}

inline double first_variation_onofri(const GeometryCache& c, const ConformalFactor& cf, const NormalVariation& w) {
    double t1 = 0, t2 = 0, t3 = 0, t4 = 0, trA_int = 0, area = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        const auto& G = c.pts[i];
        VarLocal v = var_local(G, w.w[i]);
        double vol = c.vol(i);
        Eigen::Vector2d ga = raise(G, cf.dalpha[i]);
        double da2 = cf.dalpha[i].dot(ga);
        t1 += -0.5 * vol * da2 * v.trA;
        t2 += vol * ga.dot(v.a * ga);
        t3 += 0.5 * kKg0 * vol * std::exp(-2 * cf.alpha[i]) * v.trA;
        t4 += -vol * wedge_density(G, cf.dalpha[i], dK_form_frame(G, v));
        trA_int += vol * v.trA;
        area += vol;
    }
    return t1 + t2 + t3 + t4 - 0.5 * kKg0 * trA_int / area;
}

// Closed-form expression through alpha'. Exact when the image is a round sphere; on other surfaces it
// differs from the path derivative below by a few 1e-2. Kept as a diagnostic.
inline double second_variation_onofri_closed(const Immersion& im, const GeometryCache& c, const ConformalFactor& cf,
                                             const AlphaPrime& ap, const NormalVariation& w) {
    double s = 0, trA_int = 0, area = 0, dvol2_int = 0;
    for (int i = 0; i < c.size(); ++i) {
        if (c.excised[i]) continue;
        const auto& G = c.pts[i];
        VarLocal v = var_local(G, w.w[i]);
        double vol = c.vol(i), vol0 = vol * std::exp(-2 * cf.alpha[i]);
        Eigen::Vector2d ga = raise(G, cf.dalpha[i]), gp = raise(G, ap.grad[i]);
        double da2 = cf.dalpha[i].dot(ga);
        double dvol2 = v.dw2 - v.wp16;
        double x = 0;
        x += ga.dot(v.b * ga);
        x -= 2 * ga.dot(v.a * ga) * v.trA;
        x -= 0.5 * da2 * (v.dw2 - 2 * v.trA * v.trA - v.wp16);
        x += 2 * ga.dot(v.a * gp);
        x -= cf.dalpha[i].dot(gp) * v.trA;
        x -= wedge_density(G, ap.grad[i], dK_form_frame(G, v));
        // -2 d alpha ^ Im( <Lperp w + 4 Re(..h0), dw> - trA k1 - 4 <d phi, d w><H, dbar w> )
        {
            std::array<Vec, 2> E = {G.Ec(0, 0) * G.e[0] + G.Ec(1, 0) * G.e[1], G.Ec(0, 1) * G.e[0] + G.Ec(1, 1) * G.e[1]};
            auto wa = frame_derivs(G, v.dw);
            auto [hr, hi] = G.h0();
            CVec H{G.H, Vec::Zero()}, h0{hr, hi};
            Vec lperp = normal_laplacian_direct(G, im.jets[i], w.w[i], im.dim);
            cplx c1 = cdot(delbar(E), delbar(wa));
            CVec first{lperp + 4 * (c1.real() * hr - c1.imag() * hi), Vec::Zero()};
            cplx k1 = cdot(H, del(wa)) - cdot(h0, delbar(wa));
            cplx cc = cdot(first, del(wa)) - v.trA * k1 - 4.0 * cdot(del(E), del(wa)) * cdot(H, delbar(wa));
            x -= 2 * wedge_density(G, cf.dalpha[i], im_form(cc));
        }
        // -1/2 |nabla^perp w|^2 Delta_g alpha with Delta_g alpha = -K_g + K_g0 e^{-2 alpha}
        {
            double f = normal_grad_norm2(im.jets[i], w.w[i], im.dim).first;
            x -= 0.5 * f * (-G.K + kKg0 * std::exp(-2 * cf.alpha[i]));
        }
        s += vol * x;
        s += 0.5 * kKg0 * vol0 * dvol2;
        s -= kKg0 * vol0 * ap.value[i] * v.trA;
        trA_int += vol * v.trA;
        dvol2_int += vol * dvol2;
        area += vol;
    }
    s += 0.5 * kKg0 * (trA_int / area) * (trA_int / area);
    s -= 0.5 * kKg0 * dvol2_int / area;
    return s;
}

// H(u, v) = d/dt DO_{phi + t u}(v) for a batch of v. DO at phi + t u only sees the normal part of v,
// so the analytic first variation is applied to the projected field; t-derivative by Richardson on (h, h/2).
struct OnofriHessianRow {
    std::vector<double> values;
    double h = 0;
    double richardson_gap = 0;
};

inline OnofriHessianRow onofri_hessian_row(const Immersion& im, const NormalVariation& u,
                                           const std::vector<const NormalVariation*>& vs, const UniformizeOptions& opt,
                                           double h = 1e-3) {
    if (!(h > 0)) throw ConfigError("fd step must be positive");
    for (auto* v : vs)
        if (int(v->w.size()) != im.size()) throw ShapeError("variation does not match immersion");
    UniformizeOptions o = opt;
    o.method = UniformizeOptions::Method::Newton;
    o.gauge = true;
    auto first = [&](double t) {
        Immersion d = displaced(im, u.w, t);
        d.modified = true;
        auto c = geometry(d);
        auto cf = conformal_factor(d, c, o);
        std::vector<double> r;
        r.reserve(vs.size());
        for (auto* v : vs) r.push_back(first_variation_onofri(c, cf, project_normal(d, v->w)));
        return r;
    };
    auto p1 = first(h), m1 = first(-h), p2 = first(h / 2), m2 = first(-h / 2);
    OnofriHessianRow row;
    row.h = h;
    row.values.resize(vs.size());
    for (std::size_t k = 0; k < vs.size(); ++k) {
        double d1 = (p1[k] - m1[k]) / (2 * h), d2 = (p2[k] - m2[k]) / h;
        row.values[k] = (4 * d2 - d1) / 3;
        row.richardson_gap = std::max(row.richardson_gap, std::abs(d2 - d1));
    }
    return row;
}

inline double second_variation_onofri(const Immersion& im, const NormalVariation& w, const UniformizeOptions& opt = {},
                                      double h = 1e-3) {
    return onofri_hessian_row(im, w, {&w}, opt, h).values[0];
}

// ||D O|| <= 4 pi |chi| + 3 int |d alpha|^2 + (sqrt W + sqrt(W - 2 pi chi)) (int |d alpha|^2)^{1/2}
inline double onofri_first_bound(double W, double dirichlet_full, double chi = 2.0) {
    return 4 * kPi * std::abs(chi) + 3 * dirichlet_full +
           (std::sqrt(W) + std::sqrt(std::max(0.0, W - 2 * kPi * chi))) * std::sqrt(dirichlet_full);
}

// right-hand side of the second-derivative estimate, C_PW = 1/2 for the volume-one round sphere
inline double onofri_second_bound(double W, double dirichlet_full, double dirichlet_prime, double enorm, double chi = 2.0,
                                  double cpw = 0.5) {
    double sW = std::sqrt(W), sW2 = std::sqrt(std::max(0.0, W - 2 * kPi * chi)), sa = std::sqrt(dirichlet_full);
    return (W + 12 * kPi * std::abs(chi) + 16 * dirichlet_full) * enorm * enorm +
           (2 + 5 * sW + 5 * sW2) * sa * enorm * enorm +
           (4 * kPi * cpw * std::abs(chi) + sW + sW2 + 6 * sa) * std::sqrt(dirichlet_prime) * enorm;
}

}  // namespace wlab
