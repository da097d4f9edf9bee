#pragma once

#include <fftw3.h>

#include <complex>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "sphere_domain.hpp"

namespace wlab {

struct SolverError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ConvergenceError : std::runtime_error {
    double residual;
    ConvergenceError(const std::string& m, double r) : std::runtime_error(m), residual(r) {}
};
struct AliasingError : std::runtime_error { using std::runtime_error::runtime_error; };

// Square periodic grid on [-R, R)^2, row-major with x fastest.
struct PlaneGrid {
    int n = 512;
    double R = 2.0;
    double dx() const { return 2 * R / n; }
    cplx point(int i, int j) const { return {-R + dx() * i, -R + dx() * j}; }
    int size() const { return n * n; }
};

using PlaneField = std::vector<cplx>;

class FFT2 {
public:
    explicit FFT2(int n) : n_(n) {
        buf_ = reinterpret_cast<cplx*>(fftw_malloc(sizeof(fftw_complex) * n * n));
        auto* b = reinterpret_cast<fftw_complex*>(buf_);
        fwd_ = fftw_plan_dft_2d(n, n, b, b, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(n, n, b, b, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~FFT2() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }
    FFT2(const FFT2&) = delete;
    FFT2& operator=(const FFT2&) = delete;

    // out = ifft(m * fft(in))
    void apply(const PlaneField& in, const std::vector<cplx>& mult, PlaneField& out) {
        std::copy(in.begin(), in.end(), buf_);
        fftw_execute(fwd_);
        double s = 1.0 / (double(n_) * n_);
        for (int k = 0; k < n_ * n_; ++k) buf_[k] *= mult[k] * s;
        fftw_execute(bwd_);
        out.assign(buf_, buf_ + n_ * n_);
    }

private:
    int n_;
    cplx* buf_;
    fftw_plan fwd_, bwd_;
};

// Fourier multipliers on a plane grid: Beurling conj(xi)/xi, Cauchy 2/(i xi), d_z, d_zbar.
struct PlaneOperators {
    PlaneGrid grid;
    std::vector<cplx> beurling, cauchy, dz, dzbar;
    std::unique_ptr<FFT2> fft;
    double bump_width = 0.3;
    PlaneField bump, bump_cauchy, bump_beurling;

    explicit PlaneOperators(PlaneGrid g) : grid(g) {
        int n = g.n;
        fft = std::make_unique<FFT2>(n);
        beurling.resize(n * n);
        cauchy.resize(n * n);
        dz.resize(n * n);
        dzbar.resize(n * n);
        double L = 2 * g.R;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                int ki = i < n / 2 ? i : i - n, kj = j < n / 2 ? j : j - n;
                double k1 = 2 * kPi * ki / L, k2 = 2 * kPi * kj / L;
                cplx xi(k1, k2);
                int id = j * n + i;
                bool zero = (ki == 0 && kj == 0);
                bool nyq = (i == n / 2 || j == n / 2);
                beurling[id] = zero ? 0.0 : std::conj(xi) / xi;
                cauchy[id] = zero ? 0.0 : 2.0 / (cplx(0, 1) * xi);
                dz[id] = nyq ? 0.0 : 0.5 * cplx(0, 1) * std::conj(xi);
                dzbar[id] = nyq ? 0.0 : 0.5 * cplx(0, 1) * xi;
            }
        double s2 = bump_width * bump_width;
        bump.resize(n * n);
        bump_cauchy.resize(n * n);
        bump_beurling.resize(n * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                cplx z = g.point(i, j);
                double r2 = std::norm(z);
                double e = std::exp(-r2 / s2);
                int id = j * n + i;
                bump[id] = e / (kPi * s2);
                if (r2 == 0) {
                    bump_cauchy[id] = 0.0;
                    bump_beurling[id] = 0.0;
                } else {
                    bump_cauchy[id] = (1 - e) / (kPi * z);
                    bump_beurling[id] = ((r2 / s2) * e - (1 - e)) / (kPi * z * z);
                }
            }
    }

    cplx complex_mass(const PlaneField& h) const {
        cplx m = 0;
        for (auto& v : h) m += v;
        return m * grid.dx() * grid.dx();
    }

    PlaneField apply(const PlaneField& h, const std::vector<cplx>& mult) const {
        PlaneField out;
        fft->apply(h, mult, out);
        return out;
    }

    // S h for compactly supported h; the mass is carried by a Gaussian with closed-form transforms.
    PlaneField S(const PlaneField& h) const {
        cplx m = complex_mass(h);
        PlaneField r(h.size());
        for (std::size_t k = 0; k < h.size(); ++k) r[k] = h[k] - m * bump[k];
        r = apply(r, beurling);
        for (std::size_t k = 0; k < h.size(); ++k) r[k] += m * bump_beurling[k];
        return r;
    }
    PlaneField C(const PlaneField& h) const {
        cplx m = complex_mass(h);
        PlaneField r(h.size());
        for (std::size_t k = 0; k < h.size(); ++k) r[k] = h[k] - m * bump[k];
        r = apply(r, cauchy);
        for (std::size_t k = 0; k < h.size(); ++k) r[k] += m * bump_cauchy[k];
        return r;
    }
};

// Periodic Beurling multiplier applied to h (no mass correction).
inline PlaneField beurling_transform(const PlaneOperators& ops, const PlaneField& h) {
    double edge = ops.grid.R - ops.grid.dx();
    double tail = 0, total = 0;
    for (int j = 0; j < ops.grid.n; ++j)
        for (int i = 0; i < ops.grid.n; ++i) {
            cplx z = ops.grid.point(i, j);
            double a = std::norm(h[j * ops.grid.n + i]);
            total += a;
            if (std::max(std::abs(z.real()), std::abs(z.imag())) >= edge) tail += a;
        }
    if (total > 0 && tail > 1e-20 * total) throw AliasingError("field support touches the padding boundary");
    return ops.apply(h, ops.beurling);
}

struct BeltramiCoefficient {
    PlaneField mu;
    double k = 0;  // sup norm
};

// Cell-averaged samples of mu with sub x sub points per cell.
inline BeltramiCoefficient sample_beltrami(const PlaneGrid& g, const std::function<cplx(cplx)>& mu, int sub = 8) {
    BeltramiCoefficient b;
    b.mu.assign(g.size(), 0.0);
    double dx = g.dx();
    for (int j = 0; j < g.n; ++j)
        for (int i = 0; i < g.n; ++i) {
            cplx z = g.point(i, j);
            if (std::abs(z) > 1.0 + 2 * dx) continue;
            cplx s = 0;
            for (int a = 0; a < sub; ++a)
                for (int c = 0; c < sub; ++c) {
                    cplx o(((a + 0.5) / sub - 0.5) * dx, ((c + 0.5) / sub - 0.5) * dx);
                    cplx zz = z + o;
                    if (std::abs(zz) < 1.0) s += mu(zz);
                }
            b.mu[j * g.n + i] = s / double(sub * sub);
        }
    for (auto& v : b.mu) b.k = std::max(b.k, std::abs(v));
    return b;
}

inline BeltramiCoefficient disk_indicator(const PlaneGrid& g, double k) {
    return sample_beltrami(g, [k](cplx) { return cplx(k, 0); });
}

// Smooth random coefficient supported in the unit disk with sup norm k.
inline BeltramiCoefficient random_beltrami(const PlaneGrid& g, double k, unsigned seed, int modes = 6) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(-0.5, 0.5);
    std::vector<std::pair<cplx, cplx>> bumps;
    for (int m = 0; m < modes; ++m) bumps.push_back({cplx(ud(rng), ud(rng)), cplx(nd(rng), nd(rng))});
    auto f = [bumps](cplx z) {
        double r2 = std::norm(z);
        if (r2 >= 1) return cplx(0);
        double win = std::exp(1.0 - 1.0 / (1.0 - r2));
        cplx s = 0;
        for (auto& [c, a] : bumps) s += a * std::exp(-std::norm(z - c) / 0.08);
        return s * win;
    };
    BeltramiCoefficient b;
    b.mu.assign(g.size(), 0.0);
    for (int j = 0; j < g.n; ++j)
        for (int i = 0; i < g.n; ++i) b.mu[j * g.n + i] = f(g.point(i, j));
    double sup = 0;
    for (auto& v : b.mu) sup = std::max(sup, std::abs(v));
    for (auto& v : b.mu) v *= k / sup;
    b.k = k;
    return b;
}

struct MappingSolution {
    PlaneField f;        // full map z + C h
    PlaneField h;        // d_zbar f
    PlaneField periodic; // periodic part of f - z
    cplx mass = 0;       // integral of h
    double residual = 0; // || d_zbar f - mu d_z f ||_p
    double p = 3;
    int iterations = 0;
    std::vector<double> increments;  // ||h_{n+1} - h_n||_p per iteration
};

struct BeltramiOptions {
    double p = 3.0;
    double tol = 1e-12;
    int max_iter = 200;
    double k_max = 0.5;
};

inline double lp_norm(const PlaneGrid& g, const PlaneField& v, double p) {
    double s = 0;
    for (auto& x : v) s += std::pow(std::abs(x), p);
    return std::pow(s * g.dx() * g.dx(), 1.0 / p);
}

// Residual of the Beltrami equation; f = z + P + m Cb with P periodic, differentiated spectrally.
inline double beltrami_residual(const PlaneOperators& ops, const BeltramiCoefficient& mu, const MappingSolution& sol) {
    PlaneField db = ops.apply(sol.periodic, ops.dzbar), dd = ops.apply(sol.periodic, ops.dz);
    PlaneField r(db.size());
    for (std::size_t k = 0; k < r.size(); ++k) {
        cplx fbar = db[k] + sol.mass * ops.bump[k];
        cplx fz = 1.0 + dd[k] + sol.mass * ops.bump_beurling[k];
        r[k] = fbar - mu.mu[k] * fz;
    }
    return lp_norm(ops.grid, r, sol.p);
}

inline MappingSolution solve_beltrami(const PlaneOperators& ops, const BeltramiCoefficient& mu,
                                      const BeltramiOptions& opt = {}) {
    if (!(opt.p > 2) || !std::isfinite(opt.p)) throw ConfigError("Beltrami solver needs 2 < p < infinity");
    if (mu.k >= opt.k_max) throw SolverError("Beltrami coefficient too large for a guaranteed contraction");
    const auto& g = ops.grid;
    MappingSolution sol;
    sol.p = opt.p;
    PlaneField h = mu.mu;
    bool done = false;
    for (int it = 1; it <= opt.max_iter; ++it) {
        PlaneField sh = ops.S(h);
        PlaneField hn(h.size());
        for (std::size_t k = 0; k < h.size(); ++k) hn[k] = mu.mu[k] * (sh[k] + 1.0);
        PlaneField d(h.size());
        for (std::size_t k = 0; k < h.size(); ++k) d[k] = hn[k] - h[k];
        double inc = lp_norm(g, d, opt.p);
        sol.increments.push_back(inc);
        h = std::move(hn);
        sol.iterations = it;
        if (inc < opt.tol) { done = true; break; }
    }
    sol.mass = ops.complex_mass(h);
    sol.periodic.resize(h.size());
    for (std::size_t k = 0; k < h.size(); ++k) sol.periodic[k] = h[k] - sol.mass * ops.bump[k];
    sol.periodic = ops.apply(sol.periodic, ops.cauchy);
    sol.f.resize(h.size());
    for (int j = 0; j < g.n; ++j)
        for (int i = 0; i < g.n; ++i) {
            int id = j * g.n + i;
            sol.f[id] = g.point(i, j) + sol.periodic[id] + sol.mass * ops.bump_cauchy[id];
        }
    sol.h = std::move(h);
    sol.residual = beltrami_residual(ops, mu, sol);
    if (!done) throw ConvergenceError("Beltrami iteration cap exceeded", sol.residual);
    return sol;
}

}  // namespace wlab
