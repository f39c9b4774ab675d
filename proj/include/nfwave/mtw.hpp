#pragma once

// Modulated traveling waves: the trapezoidal (box) space-time scheme in its
// ODE and DAE forms, single shooting on either flow, the monodromy operator
// of the linearized period map and Floquet multipliers via Arnoldi.

#include "nfwave/waves.hpp"

namespace nfwave {

enum class MtwForm { BoxOde, BoxDae, ShootOde, ShootDae };
const char* to_string(MtwForm f);

struct MtwOrbit {
    MtwForm form = MtwForm::ShootOde;
    double period = 0.0;
    double c_bar = 0.0;        // ODE forms; DAE forms carry mean lambda here
    Vec lambdas;               // per-slice speeds (DAE box) or empty
    std::vector<Vec> slices;   // M slices (box) or the single shooting point
    double lambda0 = 0.0;      // shooting-DAE point speed
    double section_residual = 0.0;
    double residual_sup = 0.0;

    int n_slices() const { return (int)slices.size(); }
};

// Time section anchored at a reference orbit point: <v - v_ref, w_ref> = 0
// with w_ref = c_ref d v_ref + F(v_ref).
struct OrbitSection {
    Vec v_ref;
    Vec w_ref;
    double offset = 0.0;  // <v_ref, w_ref>, cached

    double eval(const Vec& v) const { return dot(v, w_ref) - offset; }
};

OrbitSection make_section(const Vec& v_ref, double c_ref, const ModelParams& p,
                          const KernelSet& K);

// ---------------------------------------------------------------------------
// Box (trapezoidal) scheme on M uniform slices of [0,1], cyclically closed.

// rows i = 0..M-1: (T/h)[v_i - v_{i-1}] - c/2 (d v_i + d v_{i-1})
//                  - F((v_i + v_{i-1})/2), with v_{-1} = v_{M-1}
Vec box_residual_ode(const std::vector<Vec>& slices, double T, double c_bar,
                     const OrbitSection& section, const ReferenceProfile& ref,
                     const ModelParams& p, const KernelSet& K);

// DAE form: lambda_i per slice, one phase row per slice, one section row
Vec box_residual_dae(const std::vector<Vec>& slices, const Vec& lambdas, double T,
                     const OrbitSection& section, const ReferenceProfile& ref,
                     const ModelParams& p, const KernelSet& K);

struct MtwSolveOptions {
    NewtonOptions newton;       // tol defaults below are set per formulation
    StepperOptions stepper;     // shooting flows
    double c_prec = 0.0;        // 0: taken from the guess
    double fd_eps = 1e-7;       // centered differences on the shooting flow
};

// Newton-Krylov on the stacked box system; the preconditioner replaces F by
// -L0 (and the identity on lambda rows) and is applied as a forward-in-time
// block sweep with the periodic wrap dropped.
MtwOrbit solve_mtw_box(const MtwOrbit& guess, MtwForm form, const ReferenceProfile& ref,
                       const ModelParams& p, const KernelSet& K,
                       const MtwSolveOptions& opts = {}, NewtonResult* info = nullptr);

// ---------------------------------------------------------------------------
// Shooting

// SH-ODE functional at (v, c, T): [v - phi^T(v; c); section; phase]
Vec shooting_residual_ode(const Vec& point, double c_bar, double T, const OrbitSection& section,
                          const ReferenceProfile& ref, const ModelParams& p, const KernelSet& K,
                          const StepperOptions& sopts = {});

// SH-DAE functional at (v, lambda, T): [(v,lambda) - phi_dae^T(v,lambda); section]
Vec shooting_residual_dae(const Vec& point, double lambda0, double T,
                          const OrbitSection& section, const ReferenceProfile& ref,
                          const ModelParams& p, const KernelSet& K,
                          const StepperOptions& sopts = {});

MtwOrbit solve_mtw_shooting(const MtwOrbit& guess, MtwForm form, const ReferenceProfile& ref,
                            const ModelParams& p, const KernelSet& K,
                            const MtwSolveOptions& opts = {}, NewtonResult* info = nullptr);

// ---------------------------------------------------------------------------
// Floquet

// Nonlinear orbit stored densely for linearized transport along it.
struct OrbitFlow {
    Trajectory traj;   // wave-frame trajectory over [0, T]
    double period = 0.0;
    double c_bar = 0.0;
};

OrbitFlow orbit_flow(const MtwOrbit& orbit, const ModelParams& p, const KernelSet& K,
                     const StepperOptions& sopts = {});

// monodromy: integrate dw/dt = c d w + dF(v(t)) w over [0, T]
Vec monodromy_apply(const OrbitFlow& flow, const Vec& direction, const ModelParams& p,
                    const KernelSet& K, const StepperOptions& sopts = {});

struct FloquetReport {
    std::vector<EigPair> multipliers;  // sorted by magnitude descending
    int unit_count = 0;                // multipliers within unit_tol of 1
    double unit_defect_space = 0.0;    // relative defect of S d v - d v
    double unit_defect_time = 0.0;     // relative defect of S v_t - v_t
    Verdict verdict = Verdict::Marginal;
};

struct FloquetOptions {
    int k = 12;
    double unit_tol = 1e-3;
    double margin = 1e-3;  // |mu| < 1 - margin counts as contracting
    double arnoldi_tol = 1e-8;
    StepperOptions stepper;
};

FloquetReport floquet_multipliers(const MtwOrbit& orbit, const ModelParams& p,
                                  const KernelSet& K, const FloquetOptions& opts = {});

// advisory: multipliers of the linearized box scheme (see notes in the repo)
std::vector<EigPair> floquet_multipliers_box(const MtwOrbit& orbit, const ModelParams& p,
                                             const KernelSet& K, int k = 8);

// L1 space-time norm (1/T) int int |u| dxi dt of the excitatory component
double orbit_l1_norm(const MtwOrbit& orbit, const ModelParams& p, const KernelSet& K);

// flat solver layout: box-ode [v_0..v_{M-1}; c; T], box-dae [v..; lambda..; T],
// shooting [v; c_or_lambda; T]
Vec pack_orbit(const MtwOrbit& orbit);
MtwOrbit unpack_orbit(const Vec& x, MtwForm form, int n_points, int n_slices);

// block forward-sweep preconditioner of the box scheme (F replaced by -L0,
// periodic wrap dropped, identity on the appended scalar rows)
LinearMap make_box_preconditioner(int M, std::size_t n2, double T, double c_prec,
                                  std::size_t extra_rows, const ModelParams& p, const Grid& grid);

// Predictor slices/point around a wave from a Hopf eigenpair:
// v(t) = v_bar + 2 a Re(exp(i omega t) zeta), period 2 pi / omega.
MtwOrbit hopf_predictor(const WaveState& wave, const EigPair& pair, double amplitude,
                        MtwForm form, int n_slices, const Grid& grid);

}  // namespace nfwave
