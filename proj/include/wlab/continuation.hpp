#pragma once

#include "index_spectrum.hpp"

namespace wlab {

struct ContinuationOptions {
    int Lidx = 2;
    bool compute_index = true;
    std::function<void(const ViscousState&)> on_stage;   // called after each completed stage
};

struct ContinuationTrace {
    std::vector<ViscousState> states;
    bool complete = false;
    std::string failure;           // set when a stage failed and the trace is partial
    bool entropy_decreasing = true;
};

inline void attach_index(const SpectralSpace& sp, ViscousState& s, int Lidx) {
    Immersion im = spectral_immersion(sp, s.coef);
    AssemblyOptions ao;
    ao.sigma = s.sigma;
    ao.uopt = sp.uopt;
    auto rep = morse_index(assemble_hessian(im, EnergyKind::Wsigma, Lidx, ao));
    s.index = rep.index;
    s.nullity = rep.nullity;
}

inline ContinuationTrace sigma_continuation(const SpectralSpace& sp, const Eigen::MatrixXd& coef0, const SigmaSchedule& sched,
                                            const ContinuationOptions& opt = {}) {
    sched.validate();
    ContinuationTrace tr;
    Eigen::MatrixXd coef = coef0;
    for (std::size_t k = 0; k < sched.sigma.size(); ++k) {
        try {
            ViscousState s = minimize_w_sigma(sp, coef, sched.sigma[k], {sched.tol[k], sched.max_iter[k]});
            if (opt.compute_index) attach_index(sp, s, opt.Lidx);
            coef = s.coef;
            tr.states.push_back(std::move(s));
        } catch (const std::exception& e) {
            tr.failure = "stage sigma=" + std::to_string(sched.sigma[k]) + ": " + e.what();
            break;
        }
        if (tr.states.size() >= 2) {
            auto en = entropy_residual(tr.states);
            for (std::size_t j = 0; j < tr.states.size(); ++j) tr.states[j].entropy_residual = en.residual[j];
            tr.entropy_decreasing = en.decreasing;
        }
        if (opt.on_stage) opt.on_stage(tr.states.back());
    }
    tr.complete = tr.failure.empty();
    return tr;
}

}  // namespace wlab
