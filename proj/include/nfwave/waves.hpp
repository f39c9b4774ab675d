#pragma once

// Traveling waves: the bordered Newton solve for (profile, speed), the
// linearization A = c d/dx + dF(v_bar) and its projected variant, and the
// spectral stability pipeline (shift-invert plus the semigroup cross-check
// on exp(t A), which catches eigenvalues with large imaginary parts that
// shift-invert at a real shift can miss).

#include "nfwave/dynamics.hpp"

namespace nfwave {

struct TwResidual {
    Vec field;     // c d v + F(v)
    double phase;  // <v - u_hat, d u_hat>  (L2)
};

TwResidual tw_residual(const WaveState& candidate, const ReferenceProfile& ref,
                       const ModelParams& p, const KernelSet& K);

struct TwSolveOptions {
    NewtonOptions newton;   // tol_sup defaults to 1e-9
    double c_prec = 0.0;    // 0: use the guess speed
};

// Krylov-Newton on the bordered (2n+1) system in (profile, speed), right
// preconditioned by Pr(c_prec) extended with an identity speed row.
WaveState solve_tw(const WaveState& guess, const ReferenceProfile& ref, const ModelParams& p,
                   const KernelSet& K, const TwSolveOptions& opts = {},
                   NewtonResult* info = nullptr);

// A h = c d h + dF(v_bar) h, reusable matrix-free operator
LinearMap wave_operator(const WaveState& wave, const ModelParams& p, const KernelSet& K);
Vec linearization_apply(const WaveState& wave, const Vec& direction, const ModelParams& p,
                        const KernelSet& K);
// P A h (output orthogonal to d u_hat)
Vec projected_linearization_apply(const WaveState& wave, const ReferenceProfile& ref,
                                  const Vec& direction, const ModelParams& p, const KernelSet& K);

enum class Verdict { Stable, Unstable, Marginal };
const char* to_string(Verdict v);

struct SpectrumReport {
    std::vector<EigPair> eigenvalues;  // raw A scaling, sorted by Re descending
    std::string method;                // "shift-invert" or "semigroup"
    double c_bar = 0.0;                // eigenvalues/c_bar gives the transport-normalized scaling
    double kernel_eig_magnitude = 0.0; // |lambda| of the translation (Goldstone) mode
    std::complex<double> rightmost_nonzero{0.0, 0.0};
    int goldstone_index = -1;
};

struct SpectrumOptions {
    int k = 20;
    std::complex<double> shift{0.02, 0.0};  // raw A units
    double t_small = 0.1;
    double arnoldi_tol = 1e-8;
    int subspace = 0;
    StepperOptions stepper{};  // for the semigroup flow (tightened internally)
};

SpectrumReport tw_spectrum_shift_invert(const WaveState& wave, const ModelParams& p,
                                        const KernelSet& K, const SpectrumOptions& opts = {});

// Arnoldi on the time-t_small linearized flow; eigenvalues mapped back through
// log(mu)/t with the branch nearest `hint` when given.
SpectrumReport tw_spectrum_semigroup(const WaveState& wave, const ModelParams& p,
                                     const KernelSet& K, const SpectrumOptions& opts = {},
                                     const SpectrumReport* hint = nullptr);

// stable iff max nonzero Re < -gap, unstable iff > gap, else marginal
Verdict stability_verdict(const SpectrumReport& report, double gap = 1e-3);

// Newton refinement of one eigenpair of A through the bordered system
// [(A - lambda) zeta - dlambda zeta ; <q, zeta> = 1].
EigPair refine_wave_eigenpair(const WaveState& wave, const ModelParams& p, const KernelSet& K,
                              const EigPair& seed, double tol = 1e-10, int max_iter = 15);

struct StabilityAssessment {
    SpectrumReport shift_invert;
    SpectrumReport semigroup;          // populated when the cross-check ran
    bool cross_checked = false;
    std::complex<double> rightmost{0.0, 0.0};  // refined when possible
    std::vector<std::complex<double>> rightmost_vec;
    double goldstone_mag = 0.0;
    Verdict verdict = Verdict::Marginal;
};

struct StabilityOptions {
    SpectrumOptions spectrum{};
    double gap = 1e-3;
    // run the semigroup whenever |Re rightmost| falls below this window
    double cross_check_window = 0.05;
    bool always_cross_check = false;
    bool refine = true;
};

StabilityAssessment assess_stability(const WaveState& wave, const ModelParams& p,
                                     const KernelSet& K, const StabilityOptions& opts = {});

}  // namespace nfwave
