#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "variations.hpp"

namespace wlab {

struct FdResult {
    double value = 0;
    std::array<double, 3> raw{};   // central differences at h, h/2, h/4
    double h = 0;
    double observed_order = std::numeric_limits<double>::quiet_NaN();
    bool order_measurable = false;
    bool converged = true;
    double order_step = 0;   // largest step of the triple the order was read from
};

struct OracleError : std::runtime_error { using std::runtime_error::runtime_error; };

// Richardson-extrapolated central difference of f at 0. rel_noise: relative accuracy of one evaluation of f.
inline FdResult fd_derivative(const std::function<double(double)>& f, int order, double h, double rel_noise = 1e-15,
                              int max_coarsen = 5) {
    if (order != 1 && order != 2) throw ConfigError("fd order must be 1 or 2");
    if (!(h > 0)) throw ConfigError("fd step must be positive");
    FdResult r;
    r.h = h;
    double f0 = order == 2 ? f(0.0) : 0.0;
    double fmax = std::abs(f0);
    for (int k = 0; k < 3; ++k) {
        double s = h / double(1 << k);
        double fp = f(s), fm = f(-s);
        fmax = std::max({fmax, std::abs(fp), std::abs(fm)});
        r.raw[k] = order == 1 ? (fp - fm) / (2 * s) : (fp - 2 * f0 + fm) / (s * s);
    }
    double R1 = (4 * r.raw[1] - r.raw[0]) / 3, R2 = (4 * r.raw[2] - r.raw[1]) / 3;
    r.value = (16 * R2 - R1) / 15;
    // Observed order: ladder of central differences at h/4, h/2, h, 2h, ...; each consecutive triple gives an order
    // once its differences clear the noise floor. Report the finest order confirmed by the next coarser triple.
    std::vector<double> ladder{r.raw[2], r.raw[1], r.raw[0]};
    std::vector<double> orders;   // orders[j] from ladder[j..j+2], NaN when below the floor
    auto triple_order = [&](std::size_t j) {
        double hs = h / 4 * double(1 << j);
        double noise = rel_noise * (1 + fmax) / (order == 1 ? hs : hs * hs);
        double d2 = std::abs(ladder[j] - ladder[j + 1]), d1 = std::abs(ladder[j + 1] - ladder[j + 2]);
        return d2 > 1e2 * noise && d1 > 0 ? std::log2(d1 / d2) : std::numeric_limits<double>::quiet_NaN();
    };
    {
        double hs = h / 4, noise = rel_noise * (1 + fmax) / (order == 1 ? hs : hs * hs);
        r.converged = std::abs(r.raw[0] - r.raw[1]) < 1e4 * noise + 1e-9 * std::abs(r.value);
    }
    orders.push_back(triple_order(0));
    double fallback = orders[0];
    std::size_t fallback_j = 0;
    for (int up = 0; up <= max_coarsen; ++up) {
        double s = h * double(2 << up), fp, fm;
        try {
            fp = f(s);
            fm = f(-s);
        } catch (const std::exception&) {
            break;   // the coarse step left the admissible set
        }
        fmax = std::max({fmax, std::abs(fp), std::abs(fm)});
        ladder.push_back(order == 1 ? (fp - fm) / (2 * s) : (fp - 2 * f0 + fm) / (s * s));
        std::size_t j = orders.size();
        orders.push_back(triple_order(j));
        if (std::isnan(fallback)) fallback = orders[j], fallback_j = j;
        double p = orders[j - 1], q = orders[j];
        if (!std::isnan(p) && !std::isnan(q) && std::abs(p - q) < 0.1) {
            r.order_measurable = true;
            r.observed_order = p;
            r.order_step = h * double(1 << (j - 1));
            break;
        }
        if (up >= 1 && std::isnan(fallback)) break;   // still at the floor two doublings up
    }
    if (!r.order_measurable && !std::isnan(fallback)) {
        // no two triples agree: report the finest measurable one as is
        r.order_measurable = true;
        r.observed_order = fallback;
        r.order_step = h * double(1 << fallback_j);
    }
    if (r.order_measurable && r.order_step == h) r.converged = r.observed_order > 1.5 && r.observed_order < 2.5;
    return r;
}

inline double sup_norm(const Immersion& im) {
    double s = 0;
    for (auto& j : im.jets) s = std::max(s, j.value().cwiseAbs().maxCoeff());
    return s;
}

inline double default_fd_step(const Immersion& im, const GeometryCache& c, const NormalVariation& w, int order) {
    double en = energy_norm(im, c, w).value;
    if (!(en > 0)) return order == 1 ? 1e-3 : 1e-2;
    return (order == 1 ? 1e-3 : 1e-2) * (1 + sup_norm(im)) / en;
}

using EnergyFn = std::function<double(const Immersion&)>;

// derivative of t -> E(phi + t w)
inline FdResult fd_oracle(const EnergyFn& energy, const Immersion& im, const NormalVariation& w, int order,
                          double h = 0, double rel_noise = 1e-15) {
    if (h <= 0) {
        auto c = geometry(im);
        h = default_fd_step(im, c, w, order);
    }
    return fd_derivative([&](double t) { return energy(displaced(im, w.w, t)); }, order, h, rel_noise);
}

inline double rel_error(double formula, double fd, double scale = 1e-3) {
    return std::abs(formula - fd) / std::max(std::abs(fd), scale);
}

// magnitude of a k-th variation of an energy of size E along w: max(|E|, 1) |w|_E^k
inline double variation_scale(double E, double enorm, int k) {
    return std::max(std::abs(E), 1.0) * std::pow(enorm, k);
}

}  // namespace wlab
