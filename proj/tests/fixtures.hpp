#pragma once

// Shared expensive fixtures: a solved desk-scale traveling pulse at
// theta_i = 0.3869, tau = 1.3 (N = 512, L = 250), seeded by nucleating a
// rightward pulse and settling it in the frozen frame.

#include <map>

#include "testutil.hpp"

namespace nftest {

using namespace nfwave;

inline ModelParams tp_params() {
    ModelParams p;
    p.theta_i = 0.3869;
    p.tau = 1.3;
    return p;
}

struct TpFixture {
    Grid grid;
    std::unique_ptr<KernelSet> kernels;
    WaveState wave;
    ReferenceProfile ref;
    NewtonResult solve_info;
};

inline const TpFixture& desk_tp(int n = 512, double L = 250.0) {
    static std::map<int, std::unique_ptr<TpFixture>> cache;
    auto& slot = cache[n];
    if (slot) return *slot;
    auto fx = std::make_unique<TpFixture>();
    ModelParams p = tp_params();
    fx->grid = Grid(n, L);
    fx->kernels = std::make_unique<KernelSet>(p, fx->grid);
    const KernelSet& K = *fx->kernels;
    auto eqs = clamped_equilibria(p);

    Vec prof = bump_profile(fx->grid, 0.0, 15.0, 0.7, 0.0);
    Vec vpart = bump_profile(fx->grid, -12.0, 15.0, 0.0, 0.5);
    axpy(1.0, vpart, prof);
    for (int i = 0; i < n; ++i) {
        prof[i] += eqs[0].u;
        prof[n + i] += eqs[0].v;
    }
    // settle in the frozen frame; lambda converges to the wave speed
    ReferenceProfile ref0 = make_reference(prof, fx->grid);
    FrozenState fs;
    fs.profile = prof;
    StepperOptions sopts;
    sopts.rtol = 1e-8;
    sopts.atol = 1e-8;
    Trajectory tr = simulate_freezing_dae(fs, ref0, 0.0, 20.0, p, K, sopts);
    FrozenState settled = frozen_state_at(tr, tr.t1(), n);

    WaveState guess;
    guess.profile = settled.profile;
    guess.speed = settled.lambda;
    fx->ref = make_reference(guess.profile, fx->grid);
    TwSolveOptions topt;
    topt.newton.tol_sup = 1e-9;
    fx->wave = solve_tw(guess, fx->ref, p, K, topt, &fx->solve_info);
    slot = std::move(fx);
    return *slot;
}

}  // namespace nftest
