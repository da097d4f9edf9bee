// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <functional>

#include "wlab/beltrami.hpp"
#include "wlab/commands.hpp"

using namespace wlab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;
int bound_checks = 0, bound_violations = 0;   // accumulated for the last criterion

void report(int id, bool ok, const std::string& detail, double secs) {
    std::printf("%s criterion %d: %s [%.1f s]\n", ok ? "PASS" : "FAIL", id, detail.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

void guarded(int id, const std::function<void()>& body) {
    auto t0 = Clock::now();
    try {
        body();
    } catch (const std::exception& e) {
        report(id, false, std::string("exception: ") + e.what(), seconds_since(t0));
    }
}

const std::vector<std::string> kClosedRegistry = {"round:1",
                                                  "ellipsoid:1,1,1.5",
                                                  "perturbed_sphere:2,0,0.1",
                                                  "branched_cover:2",
                                                  "mobius_inverted:round:1@0.3,0,0.2",
                                                  "lift4:0.3:ellipsoid:1,1,1.5"};

const std::vector<std::string> kSmooth = {"round:1",
                                          "ellipsoid:1,1,1.5",
                                          "perturbed_sphere:2,0,0.1",
                                          "mobius_inverted:round:1@0.3,0,0.2",
                                          "lift4:0.3:ellipsoid:1,1,1.5",
                                          "lift4:0.5:round:1"};

constexpr std::uint64_t kSeed = 20240601;

void check_energy_exactness() {
    auto g = build_grid(32);
    double worst = 0, slowest = 0;
    for (double r : {0.5, 1.0, 3.0}) {
        auto t0 = Clock::now();
        auto im = sample(make_test_surface("round:" + num(r)), g);
        double W = energies(im, geometry(im)).W;
        slowest = std::max(slowest, seconds_since(t0));
        worst = std::max(worst, std::abs(W - 4 * kPi) / (4 * kPi));
    }
    report(1, worst < 1e-8 && slowest < 1.0, fmt("max rel |W - 4pi| = %.3g, slowest %.3f s", worst, slowest), slowest);
}

void check_gauss_bonnet() {
    auto t0 = Clock::now();
    auto g = build_grid(32);
    bool ok = true;
    std::string d;
    for (auto [spec, tol] : std::vector<std::pair<std::string, double>>{
             {"round:1", 1e-6}, {"ellipsoid:1,1,1.5", 1e-6}, {"branched_cover:2", 1e-3}}) {
        auto im = sample(make_test_surface(spec), g);
        auto gb = willmore_gauss_bonnet(im, geometry(im));
        double err = std::abs(gb.total_curvature - gb.predicted);
        ok &= err < tol;
        d += fmt("%s (%.10g, %.10g) err %.2g; ", spec.c_str(), gb.total_curvature, gb.predicted, err);
    }
    double s = seconds_since(t0);
    report(2, ok && s < 10, d, s);
}

void check_variation_suite() {
    auto t0 = Clock::now();
    auto g = build_grid(24);
    UniformizeOptions u;
    u.band_limit = 12;
    bool ok = true;
    double wf = 0, o1 = 0, o2 = 0;
    int measured = 0;
    std::string bad;
    for (auto& spec : kClosedRegistry) {
        auto im = sample(make_test_surface(spec), g);
        auto probes = make_probes(im, kSeed, 12, 3);
        auto vc = variation_check(im, probes, u);
        wf = std::max(wf, vc.max_rel_WF);
        o1 = std::max(o1, vc.max_rel_O1);
        o2 = std::max(o2, vc.max_rel_O2);
        measured += vc.orders_measured;
        bound_checks += vc.bound_checks;
        bound_violations += vc.bound_violations;
        bool here = vc.max_rel_WF < 1e-4 && vc.max_rel_O1 < 1e-4 && vc.max_rel_O2 < 1e-2 && vc.orders_ok &&
                    vc.orders_measured > 0;
        if (!here) bad += spec + " ";
        ok &= here;
    }
    double s = seconds_since(t0);
    report(3, ok && s < 600,
           fmt("seed %llu, 12 probes l<=3 on %zu surfaces: max rel W/F %.2g, DO %.2g, D2O %.2g; %d orders in [1.8, 2.2]%s%s",
               (unsigned long long)kSeed, kClosedRegistry.size(), wf, o1, o2, measured, bad.empty() ? "" : "; failing: ",
               bad.c_str()),
           s);
}

void check_normal_laplacian() {
    auto t0 = Clock::now();
    auto g = build_grid(32);
    double worst = 0;
    for (auto& spec : kSmooth) {
        auto im = sample(make_test_surface(spec), g);
        auto c = geometry(im);
        for (auto& w : make_probes(im, kSeed, 12, 3).fields)
            worst = std::max(worst, normal_laplacian_identity_residual(im, c, w));
    }
    report(4, worst < 1e-7, fmt("sup residual %.3g over %zu smooth surfaces in R^3 and R^4", worst, kSmooth.size()),
           seconds_since(t0));
}

void check_beltrami() {
    auto t0 = Clock::now();
    const int n = 512;
    PlaneOperators ops(PlaneGrid{n, 2.0});
    auto sol = solve_beltrami(ops, disk_indicator(ops.grid, 0.2));
    double err = 0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            cplx z = ops.grid.point(i, j);
            if (std::abs(z) < 0.9) err = std::max(err, std::abs(sol.f[j * n + i] - (z + 0.2 * std::conj(z))));
        }
    double res = 0;
    for (unsigned seed : {1u, 2u, 3u}) {
        auto mu = random_beltrami(ops.grid, 0.3, seed);
        res = std::max(res, solve_beltrami(ops, mu).residual);
    }
    double s = seconds_since(t0);
    report(5, err < 1e-4 && res < 1e-6 && s < 30,
           fmt("512^2: disk max error %.3g, random k=0.3 L^3 residual %.3g", err, res), s);
}

void check_onofri_suite() {
    auto t0 = Clock::now();
    auto g = build_grid(32);
    double round_max = 0;
    for (auto spec : {"round:0.5", "round:1", "round:3"}) {
        auto im = sample(make_test_surface(spec), g);
        round_max = std::max(round_max, std::abs(onofri_value(im)));
    }
    bool ineq = true;
    double mom = 0, slack = 1e300;
    std::string skipped;
    for (auto& spec : kClosedRegistry) {
        auto im = sample(make_test_surface(spec), g);
        if (!im.surface->branches.empty()) {
            skipped += spec + " ";
            continue;
        }
        auto c = geometry(im);
        auto cf = conformal_factor(im, c);
        auto o = onofri_energy(c, cf);
        ineq &= cf.gauged && o.total >= -1e-10 && o.total >= o.dirichlet_full / 6 - 1e-10;
        slack = std::min(slack, o.total - o.dirichlet_full / 6);
        mom = std::max(mom, cf.moments.norm());
    }
    report(6, round_max < 1e-8 && ineq && mom < 1e-8,
           fmt("|O(round)| %.3g; O >= |d alpha|^2/6 with min slack %.3g; max gauge moment %.3g%s%s", round_max, slack,
               mom, skipped.empty() ? "" : "; branched skipped: ", skipped.c_str()),
           seconds_since(t0));
}

void check_cutoff() {
    auto t0 = Clock::now();
    BranchPoint b;
    double worst = 0;
    for (auto [a, f] : std::vector<std::pair<double, double>>{{0.5, 0.1}, {0.3, 0.09}, {0.2, 0.01}, {0.1, 1e-4}, {0.05, 1e-6}}) {
        auto eta = log_cutoff(b, a, f);
        worst = std::max(worst, std::abs(eta.dirichlet() - 2 * kPi / std::log(a / f)));
    }
    auto s = make_test_surface("branched_cover:2");
    auto u = [s](Chart ch, cplx z) { return s->jet(ch, z).c[0]; };
    auto rep = localized_index_study(s, s->branches, u, {0.4, 0.2, 0.1, 0.05, 0.025}, [](double a) { return a * a; });
    report(7, worst < 1e-10 && rep.decreasing,
           fmt("max |Dirichlet - 2pi/log(a/f)| %.3g; J1 %.3g -> %.3g, J3 %.3g -> %.3g", worst, rep.rows.front().J1,
               rep.rows.back().J1, rep.rows.front().J3, rep.rows.back().J3),
           seconds_since(t0));
}

void check_spectrum() {
    auto t0 = Clock::now();
    auto g = build_grid(32);
    auto im = sample(make_test_surface("round:1"), g);
    auto a = morse_index(assemble_hessian(im, EnergyKind::W, 4));
    auto b = morse_index(assemble_hessian(im, EnergyKind::CW, 4));
    double spread = 0;
    int k = 0;
    for (int l = 0; l <= 4; ++l) {
        double lo = a.eigenvalues[k], hi = a.eigenvalues[k + 2 * l];
        spread = std::max(spread, (hi - lo) / std::max(1.0, std::abs(hi)));
        k += 2 * l + 1;
    }
    double diff = (a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff();
    bool same = a.index == b.index && a.nullity == b.nullity && diff <= a.tau;
    double ray = 0;
    for (auto& r : rayleigh_crosscheck(im, EnergyKind::W, 4, a, a.dimension)) ray = std::max(ray, r.rel_error);
    double s = seconds_since(t0);
    report(8, a.index == 0 && a.nullity >= 4 && spread < 1e-6 && same && ray < 1e-3 && s < 300,
           fmt("index %d nullity %d; m-spread %.3g; |spec W - spec CW| %.3g (tau %.3g); Rayleigh %.3g", a.index, a.nullity,
               spread, diff, a.tau, ray),
           s);
}

void check_continuation() {
    auto t0 = Clock::now();
    auto g = build_grid(24);
    auto sp = make_spectral_space(g, 4, 3, 12);
    auto coef0 = to_coefficients(sp, make_test_surface("perturbed_sphere:2,0,0.1"));
    auto sched = SigmaSchedule::uniform({0.05, 0.02, 0.01}, 1e-6, 200);
    ContinuationOptions co;
    co.Lidx = 4;
    auto tr = sigma_continuation(sp, coef0, sched, co);
    if (!tr.complete) throw NumericalError(tr.failure);
    auto& last = tr.states.back();
    // operator bounds at every state
    for (auto& st : tr.states) {
        Immersion im = spectral_immersion(sp, st.coef);
        auto c = geometry(im);
        double W = energies(im, c).W;
        auto cf = conformal_factor(im, c, sp.uopt);
        double dir = dirichlet_energy(c, cf.dalpha);
        for (auto& w : make_probes(im, kSeed, 12, 3).fields) {
            auto en = energy_norm(im, c, w);
            auto v = variations(im, c, w, false);
            bound_checks += 2;
            if (std::abs(v.DW) > dw_bound(W, en) * (1 + 1e-12)) ++bound_violations;
            if (std::abs(first_variation_onofri(c, cf, w)) > onofri_first_bound(W, dir) * en.value * (1 + 1e-12))
                ++bound_violations;
        }
    }
    std::string er;
    for (auto& s : tr.states) er += num(s.entropy_residual).substr(0, 8) + " ";
    double s = seconds_since(t0);
    report(9, std::abs(last.W - 4 * kPi) < 1e-2 && last.index == 0 && tr.entropy_decreasing && s < 1200,
           fmt("final W - 4pi = %.3g, index %d, nullity %d, entropy residuals %s", last.W - 4 * kPi, last.index,
               last.nullity, er.c_str()),
           s);
}

}  // namespace

int main() {
    auto t0 = Clock::now();
    guarded(1, check_energy_exactness);
    guarded(2, check_gauss_bonnet);
    guarded(3, check_variation_suite);
    guarded(4, check_normal_laplacian);
    guarded(5, check_beltrami);
    guarded(6, check_onofri_suite);
    guarded(7, check_cutoff);
    guarded(8, check_spectrum);
    guarded(9, check_continuation);
    report(10, bound_checks > 0 && bound_violations == 0,
           fmt("%d violations in %d bound checks over probes and continuation states", bound_violations, bound_checks),
           seconds_since(t0));
    std::printf("%d of 10 criteria failed\n", failures);
    return failures ? 1 : 0;
}
