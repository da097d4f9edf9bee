#pragma once

#include <ceres/ceres.h>

#include "onofri.hpp"

namespace wlab {

inline const double kSigmaMax = std::exp(-2.0);

inline void check_sigma(double s) {
    if (!(s > 0 && s < kSigmaMax)) throw ConfigError("sigma must lie in (0, e^-2)");
}

// 1/log(1/sigma), with the sigma = 0 limit (plain Willmore) allowed
inline double onofri_weight(double sigma) {
    if (sigma == 0.0) return 0.0;
    check_sigma(sigma);
    return 1.0 / std::log(1.0 / sigma);
}

inline double w_sigma_combine(double W, double F, double O, double sigma) {
    return W + sigma * sigma * F + O * onofri_weight(sigma);
}

struct SigmaSchedule {
    std::vector<double> sigma;
    std::vector<double> tol;      // gradient tolerance factor per stage
    std::vector<int> max_iter;

    static SigmaSchedule uniform(const std::vector<double>& s, double tol = 1e-6, int max_iter = 200) {
        SigmaSchedule r;
        r.sigma = s;
        r.tol.assign(s.size(), tol);
        r.max_iter.assign(s.size(), max_iter);
        return r;
    }
    void validate() const {
        if (sigma.empty()) throw ConfigError("empty sigma schedule");
        if (tol.size() != sigma.size() || max_iter.size() != sigma.size()) throw ConfigError("schedule arrays differ in length");
        for (std::size_t k = 0; k < sigma.size(); ++k) {
            check_sigma(sigma[k]);
            if (k && !(sigma[k] < sigma[k - 1])) throw ConfigError("sigma schedule must be strictly decreasing");
            if (!(tol[k] > 0)) throw ConfigError("schedule tolerances must be positive");
            if (max_iter[k] < 0) throw ConfigError("negative iteration cap");
        }
    }
};

// ---------- evaluation at one immersion ----------

struct WSigmaEval {
    double sigma = 0;
    GeometryCache c;
    EnergyBreakdown e;
    ConformalFactor cf;
    OnofriBreakdown o;
    bool has_onofri = false;
    double value = 0;
};

inline void require_unbranched(const Immersion& im) {
    if (!im.surface->branches.empty()) throw PreconditionError("viscous energy needs an unbranched immersion");
}

inline WSigmaEval w_sigma_eval(const Immersion& im, double sigma, const UniformizeOptions& opt = {}) {
    require_unbranched(im);
    WSigmaEval r;
    r.sigma = sigma;
    double wt = onofri_weight(sigma);
    r.c = geometry(im);
    r.e = energies(im, r.c);
    if (wt != 0.0) {
        r.cf = conformal_factor(im, r.c, opt);
        r.o = onofri_energy(r.c, r.cf);
        r.has_onofri = true;
    }
    r.value = w_sigma_combine(r.e.W, r.e.F, r.o.total, sigma);
    return r;
}

inline double w_sigma(const Immersion& im, double sigma, const UniformizeOptions& opt = {}) {
    return w_sigma_eval(im, sigma, opt).value;
}

inline double d_w_sigma(const Immersion& im, const WSigmaEval& ev, const NormalVariation& w) {
    auto v = variations(im, ev.c, w, false);
    double r = v.DW + ev.sigma * ev.sigma * v.DF;
    if (ev.has_onofri) r += onofri_weight(ev.sigma) * first_variation_onofri(ev.c, ev.cf, w);
    return r;
}

struct WSigmaSecond {
    double D2W = 0, D2F = 0, D2O = 0, value = 0;
};

// D2O supplied by the caller (ignored when sigma = 0)
inline WSigmaSecond d2_w_sigma_parts(const Immersion& im, const WSigmaEval& ev, const NormalVariation& w, double D2O) {
    WSigmaSecond r;
    auto v = variations(im, ev.c, w, true);
    r.D2W = v.D2W;
    r.D2F = v.D2F;
    if (ev.has_onofri) r.D2O = D2O;
    r.value = r.D2W + ev.sigma * ev.sigma * r.D2F + onofri_weight(ev.sigma) * r.D2O;
    return r;
}

inline double d2_w_sigma(const Immersion& im, const WSigmaEval& ev, const NormalVariation& w,
                         const UniformizeOptions& opt = {}) {
    double d2o = ev.has_onofri ? second_variation_onofri(im, w, opt) : 0.0;
    return d2_w_sigma_parts(im, ev, w, d2o).value;
}

// ---------- spectral surfaces ----------

struct SpectralSpace {
    const QuadratureGrid* grid = nullptr;
    int band = 4;
    int dim = 3;
    BasisTable<3> basis;
    UniformizeOptions uopt;
    std::shared_ptr<BasisTable<2>> alpha_basis;

    int n_params() const { return sh_count(band) * dim; }
};

inline SpectralSpace make_spectral_space(const QuadratureGrid& g, int band, int dim = 3, int alpha_band = 12) {
    check_band(g, band);
    check_band(g, alpha_band);
    SpectralSpace s;
    s.grid = &g;
    s.band = band;
    s.dim = dim;
    s.basis = build_basis<3>(g, band);
    s.alpha_basis = std::make_shared<BasisTable<2>>(build_basis<2>(g, alpha_band));
    s.uopt.band_limit = alpha_band;
    s.uopt.basis = s.alpha_basis.get();
    return s;
}

// Harmonic coefficients of a surface, band-limited on the space's grid.
inline Eigen::MatrixXd to_coefficients(const SpectralSpace& sp, SurfacePtr s) {
    if (s->dim != sp.dim) throw ShapeError("surface dimension does not match spectral space");
    if (!s->branches.empty()) throw PreconditionError("spectral surfaces must be unbranched");
    const auto& g = *sp.grid;
    Eigen::MatrixXd vals(g.size(), sp.dim);
    for (int i = 0; i < g.size(); ++i) vals.row(i) = s->point(g.nodes[i].X).head(sp.dim).transpose();
    return sh_analysis(g, vals, sp.band);
}

inline Immersion spectral_immersion(const SpectralSpace& sp, const Eigen::MatrixXd& coef) {
    return sample_spectral(make_spectral(coef, sp.band, sp.dim), *sp.grid, sp.basis);
}

inline Eigen::Map<const Eigen::VectorXd> flat(const Eigen::MatrixXd& m) { return {m.data(), m.size()}; }
inline Eigen::MatrixXd unflat(const SpectralSpace& sp, const double* x) {
    return Eigen::Map<const Eigen::MatrixXd>(x, sh_count(sp.band), sp.dim);
}

// Gradient of W_sigma with respect to the coefficients: component (b, k) is DE(P (Y_b e_k)).
inline Eigen::MatrixXd coefficient_gradient(const SpectralSpace& sp, const Immersion& im, const WSigmaEval& ev) {
    int nb = sh_count(sp.band), n = im.size();
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(nb, sp.dim);
    std::vector<std::array<std::array<J2, 4>, 4>> P(n);
    for (int i = 0; i < n; ++i) P[i] = normal_projector_jet(im.jets[i], im.dim);
    NormalVariation w;
    w.w.resize(n);
    for (int b = 0; b < nb; ++b)
        for (int k = 0; k < sp.dim; ++k) {
            for (int i = 0; i < n; ++i) {
                J3 y;
                for (int q = 0; q < J3::size; ++q) y.c[q] = sp.basis.comp[q](i, b);
                J2 y2 = truncate<2>(y);
                VJet v;
                for (int a = 0; a < im.dim; ++a) v.c[a] = promote(P[i][a][k] * y2);
                w.w[i] = v;
            }
            grad(b, k) = d_w_sigma(im, ev, w);
        }
    return grad;
}

// ---------- minimization ----------

struct ViscousState {
    Eigen::MatrixXd coef;
    int band = 0;
    double sigma = 0;
    double W = 0, F = 0, O = 0, Wsigma = 0;
    double grad_norm = 0;
    double entropy_residual = std::numeric_limits<double>::quiet_NaN();
    int index = -1, nullity = -1;
    int iterations = 0;
    std::string status;   // converged, iteration_cap, stall
    std::vector<double> energy_trace;
};

inline void fill_state(ViscousState& s, const WSigmaEval& ev) {
    s.sigma = ev.sigma;
    s.W = ev.e.W;
    s.F = ev.e.F;
    s.O = ev.has_onofri ? ev.o.total : 0.0;
    s.Wsigma = ev.value;
}

struct MinimizeOptions {
    double tol = 1e-6;        // criticality: |grad|_2 < tol (1 + W_sigma)
    int max_iter = 200;
};

namespace detail {

class WSigmaObjective : public ceres::FirstOrderFunction {
public:
    WSigmaObjective(const SpectralSpace& sp, double sigma) : sp_(sp), sigma_(sigma) {}
    bool Evaluate(const double* x, double* cost, double* gradient) const override {
        try {
            Immersion im = spectral_immersion(sp_, unflat(sp_, x));
            WSigmaEval ev = w_sigma_eval(im, sigma_, sp_.uopt);
            if (!std::isfinite(ev.value)) return false;
            *cost = ev.value;
            if (gradient) {
                Eigen::MatrixXd g = coefficient_gradient(sp_, im, ev);
                std::copy(g.data(), g.data() + g.size(), gradient);
                last_grad_norm_ = g.norm();
            }
        } catch (const std::exception&) {
            return false;   // degenerate trial point: the line search backs off
        }
        return true;
    }
    int NumParameters() const override { return sp_.n_params(); }
    double last_grad_norm() const { return last_grad_norm_; }

private:
    const SpectralSpace& sp_;
    double sigma_;
    mutable double last_grad_norm_ = 0;
};

class StopOnGradient : public ceres::IterationCallback {
public:
    StopOnGradient(double tol, std::vector<double>& trace) : tol_(tol), trace_(trace) {}
    ceres::CallbackReturnType operator()(const ceres::IterationSummary& s) override {
        if (s.step_is_valid || s.iteration == 0) trace_.push_back(s.cost);
        if (s.gradient_norm < tol_ * (1 + s.cost)) return ceres::SOLVER_TERMINATE_SUCCESSFULLY;
        return ceres::SOLVER_CONTINUE;
    }

private:
    double tol_;
    std::vector<double>& trace_;
};

}  // namespace detail

inline ViscousState evaluate_state(const SpectralSpace& sp, const Eigen::MatrixXd& coef, double sigma) {
    Immersion im = spectral_immersion(sp, coef);
    WSigmaEval ev = w_sigma_eval(im, sigma, sp.uopt);
    ViscousState s;
    s.coef = coef;
    s.band = sp.band;
    fill_state(s, ev);
    s.grad_norm = coefficient_gradient(sp, im, ev).norm();
    return s;
}

inline ViscousState minimize_w_sigma(const SpectralSpace& sp, const Eigen::MatrixXd& coef0, double sigma,
                                     const MinimizeOptions& opt = {}) {
    if (sigma != 0.0) check_sigma(sigma);
    if (coef0.rows() != sh_count(sp.band) || coef0.cols() != sp.dim) throw ShapeError("coefficients do not match space");
    ViscousState s0 = evaluate_state(sp, coef0, sigma);
    s0.energy_trace = {s0.Wsigma};
    if (s0.grad_norm < opt.tol * (1 + s0.Wsigma)) {
        s0.status = "converged";
        return s0;
    }
    std::vector<double> x(coef0.data(), coef0.data() + coef0.size());
    std::vector<double> trace;
    detail::StopOnGradient cb(opt.tol, trace);
    ceres::GradientProblemSolver::Options o;
    o.line_search_direction_type = ceres::LBFGS;
    o.max_num_iterations = opt.max_iter;
    o.gradient_tolerance = 0.0;
    o.function_tolerance = 1e-16;
    o.parameter_tolerance = 1e-16;
    o.logging_type = ceres::SILENT;
    o.callbacks.push_back(&cb);
    ceres::GradientProblemSolver::Summary summary;
    ceres::GradientProblem problem(new detail::WSigmaObjective(sp, sigma));
    ceres::Solve(o, problem, x.data(), &summary);
    ViscousState s = evaluate_state(sp, unflat(sp, x.data()), sigma);
    s.iterations = int(summary.iterations.size()) - 1;
    s.energy_trace = trace;
    if (s.grad_norm < opt.tol * (1 + s.Wsigma))
        s.status = "converged";
    else if (summary.termination_type == ceres::NO_CONVERGENCE)
        s.status = "iteration_cap";
    else
        s.status = "stall";
    return s;
}

// ---------- entropy ----------

struct EntropyError : std::runtime_error { using std::runtime_error::runtime_error; };

struct EntropyTrace {
    std::vector<double> residual;   // first entry NaN
    bool decreasing = true;         // flag only
};

// d W_sigma / d sigma between consecutive states, scaled by s log(1/s) at the midpoint s.
inline EntropyTrace entropy_residual(const std::vector<ViscousState>& trace) {
    if (trace.size() < 2) throw EntropyError("entropy residual needs at least two sigma values");
    EntropyTrace r;
    r.residual.assign(trace.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 1; k < trace.size(); ++k) {
        double s0 = trace[k - 1].sigma, s1 = trace[k].sigma;
        if (!(s1 < s0)) throw EntropyError("sigma trace is not monotone");
        double dws = (trace[k].Wsigma - trace[k - 1].Wsigma) / (s1 - s0);
        double sm = 0.5 * (s0 + s1);
        r.residual[k] = dws * sm * std::log(1 / sm);
        if (k >= 2 && std::abs(r.residual[k]) > std::abs(r.residual[k - 1])) r.decreasing = false;
    }
    return r;
}

// ---------- discrete mountain pass ----------

struct MountainPassResult {
    double beta = 0;
    int argmax = -1;
    std::vector<double> beta_history;   // max over the path after each sweep (entry 0: initial)
    std::vector<Eigen::MatrixXd> path;
    std::vector<double> energies;
};

struct InvariantViolation : std::logic_error { using std::logic_error::logic_error; };

// Jacobi sweeps of backtracked gradient steps on interior nodes, step length capped by `trust`.
inline MountainPassResult discrete_mountain_pass(const SpectralSpace& sp, std::vector<Eigen::MatrixXd> path, double sigma,
                                                 int sweeps, double trust = 0.05) {
    if (path.size() < 3) throw PreconditionError("mountain pass needs a path with at least one interior node");
    if (sigma != 0.0) check_sigma(sigma);
    const Eigen::MatrixXd first = path.front(), last = path.back();
    MountainPassResult r;
    auto energy = [&](const Eigen::MatrixXd& c) { return w_sigma(spectral_immersion(sp, c), sigma, sp.uopt); };
    r.energies.resize(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) r.energies[k] = energy(path[k]);
    auto record = [&] {
        auto it = std::max_element(r.energies.begin(), r.energies.end());
        r.beta = *it;
        r.argmax = int(it - r.energies.begin());
        r.beta_history.push_back(r.beta);
    };
    record();
    for (int s = 0; s < sweeps; ++s) {
        std::vector<Eigen::MatrixXd> next = path;
        std::vector<double> next_e = r.energies;
        for (std::size_t k = 1; k + 1 < path.size(); ++k) {
            Immersion im = spectral_immersion(sp, path[k]);
            WSigmaEval ev = w_sigma_eval(im, sigma, sp.uopt);
            Eigen::MatrixXd g = coefficient_gradient(sp, im, ev);
            double gn = g.norm();
            if (gn == 0) continue;
            double step = trust / gn;
            for (int bt = 0; bt < 30; ++bt, step *= 0.5) {
                Eigen::MatrixXd trial = path[k] - step * g;
                double e;
                try {
                    e = energy(trial);
                } catch (const std::exception&) {
                    continue;
                }
                if (e <= r.energies[k] - 1e-4 * step * gn * gn) {
                    next[k] = trial;
                    next_e[k] = e;
                    break;
                }
            }
        }
        path = std::move(next);
        r.energies = std::move(next_e);
        if ((path.front() - first).cwiseAbs().maxCoeff() > 1e-12 || (path.back() - last).cwiseAbs().maxCoeff() > 1e-12)
            throw InvariantViolation("mountain pass endpoints drifted");
        record();
    }
    r.path = std::move(path);
    return r;
}

}  // namespace wlab
