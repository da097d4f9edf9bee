#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "jet.hpp"

namespace wlab {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ShapeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DomainError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericalError : std::runtime_error { using std::runtime_error::runtime_error; };

enum class Chart { North = 0, South = 1 };

inline const char* chart_name(Chart c) { return c == Chart::North ? "north" : "south"; }

// north: z = (X1 + i X2)/(1 + X3); south: w = (X1 - i X2)/(1 - X3) = 1/z
template <int N, class T = double>
std::array<Jet<N, T>, 3> sphere_point_jet(Chart chart, cplx z0) {
    using J = Jet<N, T>;
    J x = J::variable(T(z0.real()), 0);
    J y = J::variable(T(z0.imag()), 1);
    J r2 = x * x + y * y;
    J den = inv(r2 + T(1.0));
    J one(T(1.0));
    std::array<J, 3> X;
    X[0] = x * den * T(2.0);
    X[1] = y * den * T(2.0);
    X[2] = (one - r2) * den;
    if (chart == Chart::South) {
        X[1] = -X[1];
        X[2] = -X[2];
    }
    return X;
}

inline Eigen::Vector3d sphere_point(Chart chart, cplx z) {
    double r2 = std::norm(z);
    Eigen::Vector3d X(2 * z.real(), 2 * z.imag(), 1 - r2);
    X /= (1 + r2);
    if (chart == Chart::South) { X[1] = -X[1]; X[2] = -X[2]; }
    return X;
}

inline cplx chart_coord(Chart chart, const Eigen::Vector3d& X) {
    if (chart == Chart::North) {
        if (1 + X[2] <= 0) throw DomainError("north chart undefined at the south pole");
        return cplx(X[0], X[1]) / (1 + X[2]);
    }
    if (1 - X[2] <= 0) throw DomainError("south chart undefined at the north pole");
    return cplx(X[0], -X[1]) / (1 - X[2]);
}

// density of the round metric in either stereographic chart
inline double round_density(cplx z) {
    double s = 1 + std::norm(z);
    return 4.0 / (s * s);
}

struct GridNode {
    Chart chart;
    cplx z;
    Eigen::Vector3d X;
    double weight;  // area of the round unit sphere
    double rho;     // round metric density in the chart
};

inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (t * p1 - p0) / (t * t - 1);
            double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-16) break;
        }
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (t * p1 - p0) / (t * t - 1);
        x[i] = t;
        w[i] = 2.0 / ((1 - t * t) * dp * dp);
    }
}

struct QuadratureGrid {
    int resolution = 0;
    int nlat = 0, nlon = 0;
    std::vector<GridNode> nodes;

    int size() const { return int(nodes.size()); }
    double spacing() const { return kPi / resolution; }
};

inline QuadratureGrid build_grid(int resolution) {
    if (resolution < 8) throw ConfigError("grid resolution must be at least 8");
    QuadratureGrid g;
    g.resolution = resolution;
    g.nlat = resolution;
    g.nlon = 2 * resolution;
    std::vector<double> x, w;
    gauss_legendre(resolution, x, w);
    double dphi = 2 * kPi / g.nlon;
    g.nodes.reserve(std::size_t(g.nlat) * g.nlon);
    for (int i = 0; i < g.nlat; ++i) {
        double ct = x[i], st = std::sqrt(std::max(0.0, 1 - ct * ct));
        for (int k = 0; k < g.nlon; ++k) {
            double ph = (k + 0.5) * dphi;
            GridNode n;
            n.X = Eigen::Vector3d(st * std::cos(ph), st * std::sin(ph), ct);
            n.chart = ct >= 0 ? Chart::North : Chart::South;
            n.z = chart_coord(n.chart, n.X);
            n.weight = w[i] * dphi;
            n.rho = round_density(n.z);
            g.nodes.push_back(n);
        }
    }
    return g;
}

inline int sh_index(int l, int m) { return l * l + l + m; }
inline int sh_count(int L) { return (L + 1) * (L + 1); }

// Real orthonormal spherical harmonics as polynomials in the ambient point X.
// m > 0 uses Re (X1 + i X2)^m, m < 0 uses Im; no Condon-Shortley phase.
template <class S>
std::vector<S> sh_eval(int L, const S& X1, const S& X2, const S& X3) {
    std::vector<S> Y(sh_count(L));
    std::vector<S> C(L + 1), Sn(L + 1);
    C[0] = S(1.0) + X1 * 0.0;
    Sn[0] = X1 * 0.0;
    for (int m = 1; m <= L; ++m) {
        C[m] = C[m - 1] * X1 - Sn[m - 1] * X2;
        Sn[m] = Sn[m - 1] * X1 + C[m - 1] * X2;
    }
    for (int m = 0; m <= L; ++m) {
        // q_m^m = sqrt((2m+1)/(4pi) * prod (2k-1)/(2k))
        double prod = 1.0;
        for (int k = 1; k <= m; ++k) prod *= (2.0 * k - 1) / (2.0 * k);
        double q0 = std::sqrt((2.0 * m + 1) / (4 * kPi) * prod);
        // q_l^m polynomial in X3 (derivative form, sin factor carried by C, S)
        S qprev2 = X1 * 0.0;
        S qprev = X1 * 0.0 + S(q0);
        double fac = (m == 0) ? 1.0 : std::sqrt(2.0);
        for (int l = m; l <= L; ++l) {
            S q;
            if (l == m) {
                q = qprev;
            } else {
                double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(m) * m));
                double b = (l - m >= 2)
                    ? std::sqrt(((2.0 * l + 1) * (l - m - 1.0) * (l + m - 1.0)) / ((2.0 * l - 3) * (double(l) * l - double(m) * m)))
                    : 0.0;
                q = X3 * a * 1.0;
                q = q * qprev;
                if (l - m >= 2) q = q - qprev2 * b;
                qprev2 = qprev;
                qprev = q;
            }
            if (m == 0) {
                Y[sh_index(l, 0)] = q;
            } else {
                Y[sh_index(l, m)] = q * C[m] * fac;
                Y[sh_index(l, -m)] = q * Sn[m] * fac;
            }
        }
    }
    return Y;
}

inline std::vector<double> sh_eval_point(int L, const Eigen::Vector3d& X) {
    return sh_eval<double>(L, X[0], X[1], X[2]);
}

template <int N>
std::vector<Jet<N>> sh_eval_jets(int L, Chart chart, cplx z) {
    auto X = sphere_point_jet<N>(chart, z);
    return sh_eval<Jet<N>>(L, X[0], X[1], X[2]);
}

// Basis jets of all harmonics at every node, stored component-wise: comp[k](node, basis).
template <int K>
struct BasisTable {
    int L = -1;
    std::array<Eigen::MatrixXd, Jet<K>::size> comp;

    int count() const { return sh_count(L); }

    Jet<K> jet(int node, const Eigen::VectorXd& coef) const {
        Jet<K> r;
        for (int k = 0; k < Jet<K>::size; ++k) r.c[k] = comp[k].row(node).dot(coef);
        return r;
    }
};

template <int K>
BasisTable<K> build_basis(const QuadratureGrid& g, int L) {
    BasisTable<K> t;
    t.L = L;
    int nb = sh_count(L);
    for (auto& m : t.comp) m.resize(g.size(), nb);
    for (int i = 0; i < g.size(); ++i) {
        auto Y = sh_eval_jets<K>(L, g.nodes[i].chart, g.nodes[i].z);
        for (int b = 0; b < nb; ++b)
            for (int k = 0; k < Jet<K>::size; ++k) t.comp[k](i, b) = Y[b].c[k];
    }
    return t;
}

struct SpectralField {
    int band_limit = 0;
    Eigen::MatrixXd values;        // nodes x components
    Eigen::MatrixXd coefficients;  // (L+1)^2 x components
};

inline void check_band(const QuadratureGrid& g, int L) {
    if (L < 0 || L > g.resolution - 2) throw ConfigError("band limit incompatible with grid resolution (need L <= N-2)");
}

inline Eigen::MatrixXd harmonic_matrix(const QuadratureGrid& g, int L) {
    Eigen::MatrixXd Y(g.size(), sh_count(L));
    for (int i = 0; i < g.size(); ++i) {
        auto y = sh_eval_point(L, g.nodes[i].X);
        for (int b = 0; b < sh_count(L); ++b) Y(i, b) = y[b];
    }
    return Y;
}

inline Eigen::VectorXd weights(const QuadratureGrid& g) {
    Eigen::VectorXd w(g.size());
    for (int i = 0; i < g.size(); ++i) w[i] = g.nodes[i].weight;
    return w;
}

inline double integrate(const QuadratureGrid& g, const Eigen::VectorXd& f) {
    if (f.size() != g.size()) throw ShapeError("field size does not match grid");
    double s = 0;
    for (int i = 0; i < g.size(); ++i) s += g.nodes[i].weight * f[i];
    return s;
}

inline Eigen::MatrixXd sh_analysis(const QuadratureGrid& g, const Eigen::MatrixXd& values, int L) {
    check_band(g, L);
    if (values.rows() != g.size()) throw ShapeError("field size does not match grid");
    Eigen::MatrixXd Y = harmonic_matrix(g, L);
    return Y.transpose() * (weights(g).asDiagonal() * values);
}

inline Eigen::MatrixXd sh_synthesis(const QuadratureGrid& g, const Eigen::MatrixXd& coef, int L) {
    check_band(g, L);
    if (coef.rows() != sh_count(L)) throw ShapeError("coefficient count does not match band limit");
    return harmonic_matrix(g, L) * coef;
}

inline SpectralField make_field(const QuadratureGrid& g, const Eigen::MatrixXd& values, int L) {
    SpectralField f;
    f.band_limit = L;
    f.values = values;
    f.coefficients = sh_analysis(g, values, L);
    return f;
}

// d_z^p d_zbar^q of a jet, with d_z = (dx - i dy)/2
template <int K>
cplx complex_partial(const Jet<K>& f, int p, int q) {
    // expand (dx - i dy)^p (dx + i dy)^q / 2^{p+q}
    std::vector<cplx> a(1, cplx(1.0, 0.0));  // coefficients in powers of dy
    auto mul = [&](cplx s) {
        std::vector<cplx> r(a.size() + 1, 0.0);
        for (std::size_t k = 0; k < a.size(); ++k) {
            r[k] += a[k];
            r[k + 1] += a[k] * s;
        }
        a = r;
    };
    for (int k = 0; k < p; ++k) mul(cplx(0, -1));
    for (int k = 0; k < q; ++k) mul(cplx(0, 1));
    int n = p + q;
    cplx s = 0;
    for (int j = 0; j <= n; ++j) s += a[j] * f.d(n - j, j);
    return s / std::pow(2.0, n);
}

// Spectral d_z^p d_zbar^q of a band-limited scalar field, evaluated at every node in `chart`
// (or the node's own chart when chart is null).
inline std::vector<cplx> complex_derivative(const QuadratureGrid& g, const SpectralField& f, int p, int q,
                                            const Chart* chart = nullptr, int component = 0) {
    if (p < 0 || q < 0 || p + q > 3) throw ConfigError("complex derivative order above 3 is unsupported");
    std::vector<cplx> out(g.size());
    Eigen::VectorXd c = f.coefficients.col(component);
    for (int i = 0; i < g.size(); ++i) {
        Chart ch = chart ? *chart : g.nodes[i].chart;
        cplx z = (ch == g.nodes[i].chart) ? g.nodes[i].z : chart_coord(ch, g.nodes[i].X);
        auto Y = sh_eval_jets<3>(f.band_limit, ch, z);
        Jet<3> s;
        for (int b = 0; b < int(Y.size()); ++b) s += Y[b] * c[b];
        out[i] = complex_partial(s, p, q);
    }
    return out;
}

enum class TensorKind { Scalar, OneZeroForm, ConformalDensity };

// Transition between stereographic charts, w = 1/z.
inline cplx chart_transition(cplx value, TensorKind kind, Chart from, Chart to, cplx z_from) {
    if (from == to) return value;
    if (std::abs(z_from) < 1e-14) throw DomainError("chart transition at a chart pole");
    cplx w = 1.0 / z_from;  // coordinate in the target chart
    switch (kind) {
        case TensorKind::Scalar: return value;
        case TensorKind::OneZeroForm: return value * (-1.0 / (w * w));  // dz/dw
        case TensorKind::ConformalDensity: return value / std::norm(w * w);
    }
    return value;
}

}  // namespace wlab
