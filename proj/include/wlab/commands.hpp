#pragma once

#include "io.hpp"

namespace wlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// Exit status for an exception escaping a command.
inline int exit_status_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const SurfaceError*>(&e) || dynamic_cast<const PreconditionError*>(&e) ||
        dynamic_cast<const EntropyError*>(&e))
        return kExitUsage;
    return kExitNumerical;
}

struct RunContext {
    RunConfig cfg;
    QuadratureGrid grid;
    std::filesystem::path out;

    explicit RunContext(RunConfig c) : cfg(std::move(c)), grid(build_grid(cfg.N)), out(cfg.out) { cfg.validate(); }

    UniformizeOptions uopt() const {
        UniformizeOptions o;
        o.band_limit = cfg.L;
        return o;
    }
    void write(const std::string& name, const std::string& text) const { write_text(out / name, text); }
};

inline Json header_json(const RunContext& ctx, const std::string& command) {
    Json j;
    j["command"] = command;
    j["config"] = ctx.cfg.to_json();
    return j;
}

// ---------- shared probe machinery ----------

struct ProbeSet {
    std::vector<ProbeChoice> choices;
    std::vector<NormalVariation> fields;
    bool profiled = false;
};

inline ProbeSet make_probes(const Immersion& im, std::uint64_t seed, int count, int lmax) {
    ProbeSet p;
    p.choices = draw_probes(seed, count, lmax, normal_components(im));
    std::vector<J3> prof;
    if (!im.surface->branches.empty()) {
        prof = profile_jets(*im.grid, branch_profile(im.surface->branches));
        p.profiled = true;
    }
    for (auto& c : p.choices) p.fields.push_back(harmonic_field(im, c.l, c.m, c.k, p.profiled ? &prof : nullptr));
    return p;
}

inline Json probes_json(const ProbeSet& p) {
    Json a = Json::array();
    for (std::size_t k = 0; k < p.choices.size(); ++k)
        a.push_back({{"label", p.fields[k].label}, {"l", p.choices[k].l}, {"m", p.choices[k].m}, {"axis", p.choices[k].k}});
    return a;
}

// Energies integrated over the kept (non-excised) nodes; the variation formulas differentiate exactly these.
inline double domain_energy(const Immersion& x, const std::string& which) {
    auto c = geometry(x);
    if (which == "W") return integrate_vol(c, [&](int i) { return c.pts[i].H.squaredNorm(); });
    if (which == "F") return energies(x, c).F;
    throw ConfigError("unknown domain energy " + which);
}

struct VariationRow {
    std::string quantity, probe;
    double formula = 0;
    FdResult fd;
    double rel = 0;
};

struct VariationCheck {
    std::string surface;
    std::vector<VariationRow> rows;
    std::vector<std::string> skipped;
    int bound_checks = 0, bound_violations = 0;
    double max_rel_WF = 0, max_rel_O1 = 0, max_rel_O2 = 0;
    double max_rel_O2_closed = 0;   // only filled with the closed-form diagnostic
    bool orders_ok = true;
    int orders_measured = 0;
};

struct VariationCheckOptions {
    bool onofri = true;
    bool onofri_second = true;
    bool closed_form_diagnostic = false;   // also score the alpha' closed form for D2O
};

inline VariationCheck variation_check(const Immersion& im, const ProbeSet& probes, const UniformizeOptions& uopt,
                                      const VariationCheckOptions& vo = {}) {
    VariationCheck vc;
    vc.surface = im.surface->spec;
    bool branched = !im.surface->branches.empty();
    auto c = geometry(im);
    auto e = energies(im, c);
    bool do_F = !branched;
    bool do_O = vo.onofri && !branched && im.dim == 3;
    if (!do_F) vc.skipped.push_back("F: branched surface");
    if (!do_O)
        vc.skipped.push_back(branched ? "O: branched surface (conformal factor is singular)"
                                      : (im.dim != 3 ? "O: codimension two" : "O: disabled"));
    ConformalFactor cf;
    if (do_O) cf = conformal_factor(im, c, uopt);
    double dir_alpha = do_O ? dirichlet_energy(c, cf.dalpha) : 0.0;
    double O0 = do_O ? onofri_energy(c, cf).total : 0.0;
    double Wd = domain_energy(im, "W");
    auto onofri_of = [&](const Immersion& x) {
        Immersion y = x;
        y.modified = true;
        auto cc = geometry(y);
        UniformizeOptions o = uopt;
        o.method = UniformizeOptions::Method::Newton;
        return onofri_energy(cc, conformal_factor(y, cc, o)).total;
    };
    auto add = [&](const std::string& q, const NormalVariation& w, double formula, const FdResult& fd, double* maxrel,
                   double scale) {
        VariationRow r{q, w.label, formula, fd, rel_error(formula, fd.value, scale)};
        *maxrel = std::max(*maxrel, r.rel);
        if (fd.order_measurable) {
            ++vc.orders_measured;
            if (!(fd.observed_order >= 1.8 && fd.observed_order <= 2.2)) vc.orders_ok = false;
        }
        vc.rows.push_back(r);
    };
    for (auto& w : probes.fields) {
        auto v = variations(im, c, w, true);
        auto en = energy_norm(im, c, w);
        double h1 = default_fd_step(im, c, w, 1), h2 = default_fd_step(im, c, w, 2);
        EnergyFn EW = [](const Immersion& x) { return domain_energy(x, "W"); };
        add("DW", w, v.DW, fd_oracle(EW, im, w, 1, h1), &vc.max_rel_WF, variation_scale(Wd, en.value, 1));
        add("D2W", w, v.D2W, fd_oracle(EW, im, w, 2, h2), &vc.max_rel_WF, variation_scale(Wd, en.value, 2));
        ++vc.bound_checks;
        if (std::abs(v.DW) > dw_bound(e.W, en) * (1 + 1e-12)) ++vc.bound_violations;
        if (do_F) {
            EnergyFn EF = [](const Immersion& x) { return domain_energy(x, "F"); };
            add("DF", w, v.DF, fd_oracle(EF, im, w, 1, h1), &vc.max_rel_WF, variation_scale(e.F, en.value, 1));
            add("D2F", w, v.D2F, fd_oracle(EF, im, w, 2, h2), &vc.max_rel_WF, variation_scale(e.F, en.value, 2));
        }
        if (do_O) {
            double d1 = first_variation_onofri(c, cf, w);
            add("DO", w, d1, fd_oracle(onofri_of, im, w, 1, h1, kOnofriNoise), &vc.max_rel_O1,
                variation_scale(O0, en.value, 1));
            ++vc.bound_checks;
            if (std::abs(d1) > onofri_first_bound(e.W, dir_alpha) * en.value * (1 + 1e-12)) ++vc.bound_violations;
            if (vo.onofri_second) {
                auto fd2 = fd_oracle(onofri_of, im, w, 2, h2, kOnofriNoise);
                add("D2O", w, second_variation_onofri(im, w, uopt), fd2, &vc.max_rel_O2, variation_scale(O0, en.value, 2));
                if (vo.closed_form_diagnostic) {
                    AlphaPrime ap = alpha_prime(im, w, uopt);
                    double cl = second_variation_onofri_closed(im, c, cf, ap, w);
                    vc.max_rel_O2_closed =
                        std::max(vc.max_rel_O2_closed, rel_error(cl, fd2.value, variation_scale(O0, en.value, 2)));
                }
            }
        }
    }
    return vc;
}

inline CsvTable variation_table(const VariationCheck& vc) {
    CsvTable t;
    t.header = kVariationColumns;
    for (auto& r : vc.rows)
        t.add({vc.surface, r.quantity + "/" + r.probe, num(r.formula), num(r.fd.value), num(r.rel),
               num(r.fd.order_measurable ? r.fd.observed_order : std::numeric_limits<double>::quiet_NaN())});
    return t;
}

// ---------- subcommands ----------

inline int cmd_energy(const RunContext& ctx) {
    auto s = make_test_surface(ctx.cfg.surface);
    auto im = sample(s, ctx.grid);
    auto c = geometry(im);
    auto e = energies(im, c);
    auto gb = willmore_gauss_bonnet(im, c);
    Json j = header_json(ctx, "energy");
    j["surface"] = s->spec;
    j["W"] = e.W;
    j["CW"] = e.CW;
    j["F"] = e.F;
    j["area"] = e.area;
    j["total_curvature"] = gb.total_curvature;
    j["predicted_total_curvature"] = gb.predicted;
    j["h0_energy"] = h0_energy(im, c);
    j["branches"] = branches_json(s->branches);
    if (ctx.cfg.sigma > 0 && s->branches.empty()) {
        auto ev = w_sigma_eval(im, ctx.cfg.sigma, ctx.uopt());
        j["sigma"] = ctx.cfg.sigma;
        j["O"] = ev.o.total;
        j["W_sigma"] = ev.value;
    }
    ctx.write("energy.json", json_text(j));
    save_snapshot(ctx.out / "surface.wlab", surface_snapshot(im));
    return kExitOk;
}

inline int cmd_variation_check(const RunContext& ctx) {
    auto s = make_test_surface(ctx.cfg.surface);
    auto im = sample(s, ctx.grid);
    auto probes = make_probes(im, ctx.cfg.seed, ctx.cfg.probes, ctx.cfg.probe_lmax);
    auto vc = variation_check(im, probes, ctx.uopt());
    ctx.write("variation_check.csv", variation_table(vc).text());
    Json j = header_json(ctx, "variation-check");
    j["surface"] = s->spec;
    j["seed"] = ctx.cfg.seed;
    j["generator"] = "mt19937_64";
    j["probes"] = probes_json(probes);
    j["branch_profile"] = probes.profiled;
    j["skipped"] = vc.skipped;
    j["max_rel_error_W_F"] = vc.max_rel_WF;
    j["max_rel_error_O_first"] = vc.max_rel_O1;
    j["max_rel_error_O_second"] = vc.max_rel_O2;
    j["orders_measured"] = vc.orders_measured;
    j["orders_in_range"] = vc.orders_ok;
    j["bound_checks"] = vc.bound_checks;
    j["bound_violations"] = vc.bound_violations;
    ctx.write("variation_check.json", json_text(j));
    return kExitOk;
}

inline Json conformal_json(const ConformalFactor& cf, const GeometryCache& c) {
    Json j;
    j["method"] = cf.method;
    j["band_limit"] = cf.band_limit;
    j["newton_iterations"] = cf.newton_iterations;
    j["unit_volume_residual"] = cf.unit_volume_residual;
    j["liouville_residual_l1"] = cf.liouville_residual_l1;
    j["gauged"] = cf.gauged;
    j["gauge_b"] = {cf.gauge_b[0], cf.gauge_b[1], cf.gauge_b[2]};
    j["moments"] = {cf.moments[0], cf.moments[1], cf.moments[2]};
    j["dirichlet"] = dirichlet_energy(c, cf.dalpha);
    Json d = Json::array();
    for (double x : cf.branch_defects) d.push_back(x / (2 * kPi));
    j["branch_defects_over_2pi"] = d;
    j["eigen_check"] = cf.eigen_check;
    return j;
}

inline int cmd_uniformize(const RunContext& ctx) {
    auto s = make_test_surface(ctx.cfg.surface);
    auto im = sample(s, ctx.grid);
    auto c = geometry(im);
    auto cf = conformal_factor(im, c, ctx.uopt());
    Json j = header_json(ctx, "uniformize");
    j["surface"] = s->spec;
    j["conformal_factor"] = conformal_json(cf, c);
    ctx.write("uniformize.json", json_text(j));
    Snapshot snap;
    snap.kind = "field";
    snap.resolution = ctx.grid.resolution;
    snap.band_limit = cf.band_limit;
    snap.components = 4;
    snap.data.resize(im.size(), 4);
    for (int i = 0; i < im.size(); ++i) {
        snap.data(i, 0) = cf.alpha[i];
        for (int k = 0; k < 3; ++k) snap.data(i, k + 1) = cf.U[i][k];
    }
    snap.params = {{"fields", {"alpha", "U1", "U2", "U3"}}, {"spec", s->spec}};
    snap.branches = s->branches;
    save_snapshot(ctx.out / "conformal_factor.wlab", snap);
    return kExitOk;
}

inline int cmd_onofri(const RunContext& ctx) {
    auto s = make_test_surface(ctx.cfg.surface);
    auto im = sample(s, ctx.grid);
    auto c = geometry(im);
    auto cf = conformal_factor(im, c, ctx.uopt());
    auto o = onofri_energy(c, cf);
    auto e = energies(im, c);
    Json j = header_json(ctx, "onofri");
    j["surface"] = s->spec;
    j["dirichlet"] = o.dirichlet;
    j["zeroth"] = o.zeroth;
    j["logvol"] = o.logvol;
    j["total"] = o.total;
    j["gauged"] = o.gauged;
    j["excised"] = !s->branches.empty();
    Json chk;
    chk["nonnegative"] = o.total >= -1e-10;
    chk["jensen"] = o.zeroth + o.logvol <= 1e-10;
    if (o.gauged) {
        chk["refined_sixth"] = o.total >= o.dirichlet_full / 6 - 1e-10;
        chk["refined_rhs"] = o.dirichlet_full / 6;
    } else {
        chk["refined_sixth"] = nullptr;
        std::fprintf(stderr, "warning: conformal factor not gauged; refined inequality skipped\n");
    }
    if (s->branches.empty() && im.dim == 3) {
        auto probes = make_probes(im, ctx.cfg.seed, ctx.cfg.probes, ctx.cfg.probe_lmax);
        int viol = 0;
        double worst = 0;
        for (auto& w : probes.fields) {
            double d = std::abs(first_variation_onofri(c, cf, w));
            double b = onofri_first_bound(e.W, o.dirichlet_full) * energy_norm(im, c, w).value;
            worst = std::max(worst, d / b);
            if (d > b) ++viol;
        }
        chk["first_variation_bound_violations"] = viol;
        chk["first_variation_bound_worst_ratio"] = worst;
        chk["seed"] = ctx.cfg.seed;
        chk["probes"] = probes_json(probes);
    }
    j["checks"] = chk;
    j["conformal_factor"] = conformal_json(cf, c);
    ctx.write("onofri.json", json_text(j));
    return kExitOk;
}

inline int cmd_index(const RunContext& ctx) {
    auto s = make_test_surface(ctx.cfg.surface);
    auto im = sample(s, ctx.grid);
    EnergyKind ek = parse_energy(ctx.cfg.energy);
    AssemblyOptions ao;
    ao.sigma = ctx.cfg.sigma;
    ao.uopt = ctx.uopt();
    if (ek == EnergyKind::Wsigma && ao.sigma == 0.0) throw ConfigError("Wsigma index needs --sigma");
    auto H = assemble_hessian(im, ek, ctx.cfg.Lidx, ao);
    auto rep = morse_index(H);
    Json j = header_json(ctx, "index");
    j["surface"] = s->spec;
    j["energy"] = energy_name(ek);
    j["Lidx"] = ctx.cfg.Lidx;
    j["dimension"] = rep.dimension;
    j["index"] = rep.index;
    j["nullity"] = rep.nullity;
    j["positive"] = rep.positive;
    j["tau"] = rep.tau;
    j["mass_min_eigenvalue"] = H.mass_min_eig;
    j["branch_profile"] = !s->branches.empty();
    j["excluded"] = H.excluded;
    ctx.write("index.json", json_text(j));
    CsvTable t;
    t.header = {"k", "eigenvalue", "class"};
    for (int k = 0; k < rep.dimension; ++k) {
        double l = rep.eigenvalues[k];
        t.add({std::to_string(k), num(l), l < -rep.tau ? "negative" : (l <= rep.tau ? "null" : "positive")});
    }
    ctx.write("eigenvalues.csv", t.text());
    return kExitOk;
}

inline int cmd_continue(const RunContext& ctx) {
    auto sp = make_spectral_space(ctx.grid, ctx.cfg.surface_band, 3, ctx.cfg.L);
    auto coef0 = to_coefficients(sp, make_test_surface(ctx.cfg.surface));
    auto sched = SigmaSchedule::uniform(ctx.cfg.schedule, ctx.cfg.tol, ctx.cfg.max_iter);
    ContinuationOptions co;
    co.Lidx = std::min(ctx.cfg.Lidx, ctx.cfg.surface_band);
    int stage = 0;
    co.on_stage = [&](const ViscousState& s) {
        Json p = {{"sigma", s.sigma}, {"stage", stage}, {"status", s.status}, {"spec", ctx.cfg.surface}};
        save_snapshot(ctx.out / ("stage_" + std::to_string(stage) + ".wlab"),
                      coefficient_snapshot(s.coef, s.band, ctx.grid.resolution, p));
        ++stage;
    };
    auto tr = sigma_continuation(sp, coef0, sched, co);
    ctx.write("trace.csv", trace_table(tr.states).text());
    Json j = header_json(ctx, "continue");
    j["surface"] = ctx.cfg.surface;
    j["index_band"] = co.Lidx;
    j["complete"] = tr.complete;
    j["failure"] = tr.failure;
    j["entropy_decreasing"] = tr.entropy_decreasing;
    bool converged = std::all_of(tr.states.begin(), tr.states.end(), [](auto& s) { return s.status == "converged"; });
    j["all_converged"] = converged;
    Json st = Json::array();
    for (auto& s : tr.states)
        st.push_back({{"sigma", s.sigma}, {"status", s.status}, {"iterations", s.iterations}, {"W", s.W},
                      {"W_sigma", s.Wsigma}, {"grad_norm", s.grad_norm}, {"index", s.index}, {"nullity", s.nullity}});
    j["stages"] = st;
    ctx.write("continuation.json", json_text(j));
    if (!tr.complete) std::fprintf(stderr, "continuation stopped early: %s\n", tr.failure.c_str());
    else if (!converged) std::fprintf(stderr, "some stages did not reach the gradient tolerance\n");
    return tr.complete && converged ? kExitOk : kExitNumerical;
}

inline int cmd_minmax(const RunContext& ctx) {
    auto sp = make_spectral_space(ctx.grid, ctx.cfg.surface_band, 3, ctx.cfg.L);
    auto a = to_coefficients(sp, make_test_surface(ctx.cfg.surface));
    auto b = to_coefficients(sp, make_test_surface(ctx.cfg.path_end));
    // start -> end -> start, 7 nodes
    std::vector<Eigen::MatrixXd> path;
    for (int k = 0; k <= 6; ++k) {
        double s = k <= 3 ? k / 3.0 : (6 - k) / 3.0;
        path.push_back((1 - s) * a + s * b);
    }
    auto r = discrete_mountain_pass(sp, path, ctx.cfg.sigma, ctx.cfg.sweeps);
    Json j = header_json(ctx, "minmax");
    j["beta"] = r.beta;
    j["argmax"] = r.argmax;
    j["beta_history"] = r.beta_history;
    j["energies"] = r.energies;
    ctx.write("minmax.json", json_text(j));
    save_snapshot(ctx.out / "argmax.wlab",
                  coefficient_snapshot(r.path[std::size_t(r.argmax)], sp.band, ctx.grid.resolution,
                                       {{"sigma", ctx.cfg.sigma}, {"node", r.argmax}}));
    return kExitOk;
}

inline int cmd_cutoff_study(const RunContext& ctx) {
    auto s = make_test_surface(ctx.cfg.surface);
    auto f = [p = ctx.cfg.f_power](double a) { return std::pow(a, p); };
    auto u = [s](Chart ch, cplx z) { return s->jet(ch, z).c[0]; };
    auto rep = localized_index_study(s, s->branches, u, ctx.cfg.alphas, f);
    CsvTable t;
    t.header = {"alpha", "f_alpha", "log_ratio", "eta_dirichlet", "eta_closed_form", "J1", "J2", "J3", "cutoff_error"};
    for (auto& r : rep.rows)
        t.add({num(r.alpha), num(r.f), num(r.log_ratio), num(r.eta_dirichlet), num(r.eta_closed_form), num(r.J1), num(r.J2),
               num(r.J3), num(r.cutoff_error)});
    ctx.write("cutoff_study.csv", t.text());
    Json j = header_json(ctx, "cutoff-study");
    j["surface"] = s->spec;
    j["probe"] = "first coordinate of the immersion times the normal";
    j["marks"] = branches_json(s->branches);
    j["decreasing"] = rep.decreasing;
    j["J3_fit_constant"] = rep.j3_fit_constant;
    j["J3_fit_max_rel"] = rep.j3_fit_max_rel;
    ctx.write("cutoff_study.json", json_text(j));
    return kExitOk;
}

inline const std::vector<std::string> kCommands = {"energy", "variation-check", "uniformize", "onofri",
                                                    "index", "continue", "minmax", "cutoff-study"};

inline int run_command(const std::string& cmd, const RunConfig& cfg) {
    RunContext ctx(cfg);
    if (cmd == "energy") return cmd_energy(ctx);
    if (cmd == "variation-check") return cmd_variation_check(ctx);
    if (cmd == "uniformize") return cmd_uniformize(ctx);
    if (cmd == "onofri") return cmd_onofri(ctx);
    if (cmd == "index") return cmd_index(ctx);
    if (cmd == "continue") return cmd_continue(ctx);
    if (cmd == "minmax") return cmd_minmax(ctx);
    if (cmd == "cutoff-study") return cmd_cutoff_study(ctx);
    throw ConfigError("unknown command '" + cmd + "'");
}

}  // namespace wlab
