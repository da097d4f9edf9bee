#pragma once

#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "sphere_domain.hpp"

namespace wlab {

using Vec = Eigen::Vector4d;
using J3 = Jet<3>;

// Ambient vector of jets; components beyond dim are zero.
struct VJet {
    std::array<J3, 4> c;

    Vec value() const { return Vec(c[0].value(), c[1].value(), c[2].value(), c[3].value()); }
    Vec d(int i, int j) const { return Vec(c[0].d(i, j), c[1].d(i, j), c[2].d(i, j), c[3].d(i, j)); }
    VJet& operator+=(const VJet& o) { for (int k = 0; k < 4; ++k) c[k] += o.c[k]; return *this; }
    VJet& operator*=(double s) { for (auto& x : c) x *= s; return *this; }
};

inline VJet operator+(VJet a, const VJet& b) { return a += b; }
inline VJet operator*(double s, VJet a) { return a *= s; }
inline VJet operator*(const J3& s, const VJet& a) {
    VJet r;
    for (int k = 0; k < 4; ++k) r.c[k] = s * a.c[k];
    return r;
}

struct BranchPoint {
    Chart chart;
    cplx z;
    int multiplicity;
    Eigen::Vector3d X;
};

struct SurfaceError : std::runtime_error { using std::runtime_error::runtime_error; };

// A parametrized surface S^2 -> R^dim that can be evaluated as a jet in either chart.
struct Surface {
    std::string kind;
    std::vector<double> params;
    std::string spec;
    int dim = 3;
    bool conformal = false;
    bool closed = true;
    std::vector<BranchPoint> branches;
    Eigen::MatrixXd coefficients;  // spectral surfaces only: sh_count(L) x dim
    int band_limit = -1;
    std::function<VJet(Chart, cplx)> eval;

    VJet jet(Chart ch, cplx z) const { return eval(ch, z); }
    Vec point(const Eigen::Vector3d& X) const {
        Chart ch = X[2] >= 0 ? Chart::North : Chart::South;
        return eval(ch, chart_coord(ch, X)).value();
    }
};
using SurfacePtr = std::shared_ptr<const Surface>;

inline std::vector<double> parse_numbers(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            v.push_back(std::stod(tok));
        } catch (...) {
            throw ConfigError("bad numeric parameter '" + tok + "'");
        }
    }
    return v;
}

inline VJet embed_sphere(Chart ch, cplx z, double r = 1.0) {
    auto X = sphere_point_jet<3>(ch, z);
    VJet v;
    for (int k = 0; k < 3; ++k) v.c[k] = X[k] * r;
    return v;
}

inline SurfacePtr make_round(double r) {
    if (!(r > 0)) throw ConfigError("round radius must be positive");
    auto s = std::make_shared<Surface>();
    s->kind = "round";
    s->params = {r};
    s->conformal = true;
    s->eval = [r](Chart ch, cplx z) { return embed_sphere(ch, z, r); };
    return s;
}

inline SurfacePtr make_ellipsoid(double a, double b, double c) {
    if (!(a > 0 && b > 0 && c > 0)) throw ConfigError("degenerate ellipsoid axes");
    auto s = std::make_shared<Surface>();
    s->kind = "ellipsoid";
    s->params = {a, b, c};
    s->conformal = (a == b && b == c);
    s->eval = [a, b, c](Chart ch, cplx z) {
        VJet v = embed_sphere(ch, z);
        v.c[0] *= a;
        v.c[1] *= b;
        v.c[2] *= c;
        return v;
    };
    return s;
}

inline SurfacePtr make_perturbed(int l, int m, double eps) {
    if (l < 0 || std::abs(m) > l) throw ConfigError("perturbed_sphere needs |m| <= l");
    auto s = std::make_shared<Surface>();
    s->kind = "perturbed_sphere";
    s->params = {double(l), double(m), eps};
    s->conformal = (eps == 0.0 || l == 0);
    int idx = sh_index(l, m);
    s->eval = [l, idx, eps](Chart ch, cplx z) {
        auto X = sphere_point_jet<3>(ch, z);
        auto Y = sh_eval<J3>(l, X[0], X[1], X[2]);
        J3 f = Y[idx] * eps + 1.0;
        VJet v;
        for (int k = 0; k < 3; ++k) v.c[k] = f * X[k];
        return v;
    };
    return s;
}

inline SurfacePtr make_branched_cover(int d) {
    if (d < 2) throw ConfigError("branched_cover needs degree >= 2");
    auto s = std::make_shared<Surface>();
    s->kind = "branched_cover";
    s->params = {double(d)};
    s->conformal = true;
    s->branches = {{Chart::North, 0.0, d, Eigen::Vector3d(0, 0, 1)}, {Chart::South, 0.0, d, Eigen::Vector3d(0, 0, -1)}};
    s->eval = [d](Chart ch, cplx z0) {
        J3 x = J3::variable(z0.real(), 0), y = J3::variable(z0.imag(), 1);
        // (x + iy)^d
        J3 re(1.0), im(0.0);
        for (int k = 0; k < d; ++k) {
            J3 nr = re * x - im * y;
            J3 ni = re * y + im * x;
            re = nr;
            im = ni;
        }
        J3 r2 = re * re + im * im;
        J3 den = inv(r2 + 1.0);
        VJet v;
        v.c[0] = re * den * 2.0;
        v.c[1] = im * den * 2.0;
        v.c[2] = (J3(1.0) - r2) * den;
        if (ch == Chart::South) {
            v.c[1] = -v.c[1];
            v.c[2] = -v.c[2];
        }
        return v;
    };
    return s;
}

// Flat branched disk z -> (Re z^t, Im z^t, 0), defined on the north chart only.
inline SurfacePtr make_branched_disk(int theta0) {
    if (theta0 < 1) throw ConfigError("branched_disk needs multiplicity >= 1");
    auto s = std::make_shared<Surface>();
    s->kind = "branched_disk";
    s->params = {double(theta0)};
    s->conformal = true;
    s->closed = false;
    s->branches = {{Chart::North, 0.0, theta0, Eigen::Vector3d(0, 0, 1)}};
    s->eval = [theta0](Chart ch, cplx z0) {
        if (ch != Chart::North) throw DomainError("branched_disk lives in the north chart");
        J3 x = J3::variable(z0.real(), 0), y = J3::variable(z0.imag(), 1);
        J3 re(1.0), im(0.0);
        for (int k = 0; k < theta0; ++k) {
            J3 nr = re * x - im * y;
            J3 ni = re * y + im * x;
            re = nr;
            im = ni;
        }
        VJet v;
        v.c[0] = re;
        v.c[1] = im;
        return v;
    };
    return s;
}

inline SurfacePtr make_inverted(SurfacePtr base, const Eigen::Vector3d& center) {
    if (base->dim != 3) throw ConfigError("mobius_inverted expects a surface in R^3");
    // reject centers on (or numerically at) the surface
    QuadratureGrid probe = build_grid(24);
    double dmin = 1e300;
    for (auto& n : probe.nodes) dmin = std::min(dmin, (base->point(n.X).head<3>() - center).norm());
    double scale = 0;
    for (auto& n : probe.nodes) scale = std::max(scale, base->point(n.X).head<3>().norm());
    if (dmin < 1e-3 * (1 + scale)) throw SurfaceError("inversion center lies on the surface");
    auto s = std::make_shared<Surface>();
    s->kind = "mobius_inverted";
    s->params = base->params;
    s->params.insert(s->params.end(), center.data(), center.data() + 3);
    s->conformal = base->conformal;
    s->branches = base->branches;
    s->eval = [base, center](Chart ch, cplx z) {
        VJet p = base->jet(ch, z);
        std::array<J3, 3> q;
        for (int k = 0; k < 3; ++k) q[k] = p.c[k] - center[k];
        J3 r2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
        J3 ir = inv(r2);
        VJet v;
        for (int k = 0; k < 3; ++k) v.c[k] = q[k] * ir + center[k];
        return v;
    };
    return s;
}

// Lift into R^4 with fourth coordinate kappa X1 X2 (kappa = 0 is the equatorial embedding).
inline SurfacePtr make_lift4(SurfacePtr base, double kappa) {
    if (base->dim != 3) throw ConfigError("lift4 expects a surface in R^3");
    auto s = std::make_shared<Surface>(*base);
    s->kind = "lift4";
    s->dim = 4;
    s->params.insert(s->params.begin(), kappa);
    s->conformal = base->conformal && kappa == 0.0;
    s->eval = [base, kappa](Chart ch, cplx z) {
        VJet v = base->jet(ch, z);
        auto X = sphere_point_jet<3>(ch, z);
        v.c[3] = X[0] * X[1] * kappa;
        return v;
    };
    return s;
}

inline SurfacePtr make_spectral(const Eigen::MatrixXd& coef, int L, int dim = 3) {
    if (coef.rows() != sh_count(L) || coef.cols() != dim) throw ShapeError("spectral surface coefficient shape");
    auto s = std::make_shared<Surface>();
    s->kind = "spectral";
    s->dim = dim;
    s->band_limit = L;
    s->coefficients = coef;
    s->eval = [coef, L, dim](Chart ch, cplx z) {
        auto Y = sh_eval_jets<3>(L, ch, z);
        VJet v;
        for (int b = 0; b < int(Y.size()); ++b)
            for (int k = 0; k < dim; ++k)
                if (coef(b, k) != 0.0) v.c[k] += Y[b] * coef(b, k);
        return v;
    };
    return s;
}

// Parse "kind:params", e.g. "round:1", "ellipsoid:1,1,1.5", "perturbed_sphere:2,0,0.1",
// "mobius_inverted:ellipsoid:1,1,1.5@0,0,2.5", "lift4:0.3:ellipsoid:1,1,1.5", "branched_cover:2".
inline SurfacePtr make_test_surface(const std::string& spec) {
    auto colon = spec.find(':');
    std::string kind = spec.substr(0, colon);
    std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    SurfacePtr s;
    auto need = [&](const std::vector<double>& p, std::size_t n) {
        if (p.size() != n) throw ConfigError(kind + " expects " + std::to_string(n) + " parameter(s)");
        return p;
    };
    if (kind == "round") {
        auto p = rest.empty() ? std::vector<double>{1.0} : need(parse_numbers(rest), 1);
        s = make_round(p[0]);
    } else if (kind == "ellipsoid") {
        auto p = need(parse_numbers(rest), 3);
        s = make_ellipsoid(p[0], p[1], p[2]);
    } else if (kind == "perturbed_sphere") {
        auto p = need(parse_numbers(rest), 3);
        s = make_perturbed(int(p[0]), int(p[1]), p[2]);
    } else if (kind == "branched_cover") {
        auto p = need(parse_numbers(rest), 1);
        s = make_branched_cover(int(p[0]));
    } else if (kind == "branched_disk") {
        auto p = need(parse_numbers(rest), 1);
        s = make_branched_disk(int(p[0]));
    } else if (kind == "mobius_inverted") {
        auto at = rest.rfind('@');
        if (at == std::string::npos) throw ConfigError("mobius_inverted expects base@cx,cy,cz");
        auto c = need(parse_numbers(rest.substr(at + 1)), 3);
        s = make_inverted(make_test_surface(rest.substr(0, at)), Eigen::Vector3d(c[0], c[1], c[2]));
    } else if (kind == "lift4") {
        auto c2 = rest.find(':');
        if (c2 == std::string::npos) throw ConfigError("lift4 expects kappa:base");
        auto p = need(parse_numbers(rest.substr(0, c2)), 1);
        s = make_lift4(make_test_surface(rest.substr(c2 + 1)), p[0]);
    } else {
        throw ConfigError("unknown surface kind '" + kind + "'");
    }
    auto m = std::make_shared<Surface>(*s);
    m->spec = spec;
    return m;
}

// Surface sampled as jets at every grid node (in the node's own chart).
struct Immersion {
    SurfacePtr surface;
    const QuadratureGrid* grid = nullptr;
    int dim = 3;
    std::vector<VJet> jets;
    std::vector<char> excised;  // nodes removed around branch points
    bool modified = false;      // displaced away from the analytic surface

    int size() const { return int(jets.size()); }
};

inline std::vector<char> branch_excision(const QuadratureGrid& g, const std::vector<BranchPoint>& br, double radius) {
    std::vector<char> ex(g.size(), 0);
    for (auto& b : br)
        for (int i = 0; i < g.size(); ++i) {
            double ang = std::acos(std::clamp(g.nodes[i].X.dot(b.X), -1.0, 1.0));
            if (ang < radius) ex[i] = 1;
        }
    return ex;
}

inline double excision_radius(const QuadratureGrid& g) { return 3.0 * g.spacing(); }

inline Immersion sample(SurfacePtr s, const QuadratureGrid& g) {
    if (!s->closed) throw ConfigError("only closed surfaces can be sampled on the sphere grid");
    Immersion im;
    im.surface = s;
    im.grid = &g;
    im.dim = s->dim;
    im.jets.resize(g.size());
    for (int i = 0; i < g.size(); ++i) im.jets[i] = s->jet(g.nodes[i].chart, g.nodes[i].z);
    im.excised = branch_excision(g, s->branches, excision_radius(g));
    return im;
}

// Fast sampling of spectral surfaces through a precomputed basis table.
inline Immersion sample_spectral(SurfacePtr s, const QuadratureGrid& g, const BasisTable<3>& B) {
    if (s->kind != "spectral" || B.L != s->band_limit) throw ShapeError("basis table does not match surface");
    Immersion im;
    im.surface = s;
    im.grid = &g;
    im.dim = s->dim;
    im.jets.resize(g.size());
    for (int k = 0; k < J3::size; ++k) {
        Eigen::MatrixXd v = B.comp[k] * s->coefficients;
        for (int i = 0; i < g.size(); ++i)
            for (int a = 0; a < s->dim; ++a) im.jets[i].c[a].c[k] = v(i, a);
    }
    im.excised.assign(g.size(), 0);
    return im;
}

// phi + t w as a new immersion (jets of w must be valid to second order).
inline Immersion displaced(const Immersion& im, const std::vector<VJet>& w, double t) {
    Immersion r = im;
    for (int i = 0; i < im.size(); ++i) r.jets[i] += t * w[i];
    r.modified = im.modified || t != 0.0;
    return r;
}

}  // namespace wlab
