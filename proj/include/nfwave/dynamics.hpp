#pragma once

// Time integration for the lab frame, the wave frame and the freezing DAE.
//
// The stepper is a 5-stage stiffly accurate SDIRK method of order 4 with an
// embedded order-3 error estimate (L-stable, gamma = 1/4).  Stages are solved
// by an inexact Newton iteration whose linear systems (M - h*gamma*J) go to
// right-preconditioned GMRES, so everything stays matrix-free.  A singular
// diagonal mass matrix is supported by rescaling the algebraic rows with
// 1/(h*gamma), which keeps the stage systems well conditioned for index-1
// problems like the freezing DAE.

#include "nfwave/linalg.hpp"
#include "nfwave/wavestate.hpp"

namespace nfwave {

struct StepperOptions {
    double rtol = 1e-8;
    double atol = 1e-8;
    double h0 = 1e-2;
    double hmin = 1e-12;
    double hmax = 1e9;
    long max_steps = 2000000;
    int max_stage_newton = 10;
    double stage_tol_factor = 0.05;  // stage Newton increment target in error-weight units
    double gmres_forcing = 1e-3;
    int gmres_max_iter = 400;
    int precond_refresh_iters = 40;  // rebuild Pr when GMRES needs more than this
    bool store_knots = true;
};

struct StepperStats {
    long n_accepted = 0;
    long n_rejected = 0;
    long n_rhs = 0;
    long n_newton = 0;
    long n_precond_builds = 0;
};

// Problem in mass-matrix form M dy/dt = f(t, y), M = diag(0/1).
struct ImplicitProblem {
    int dim = 0;
    std::function<void(double, const Vec&, Vec&)> rhs;
    // factory for the directional derivative of f frozen at (t, y)
    std::function<std::function<void(const Vec&, Vec&)>(double, const Vec&)> make_jvp;
    std::vector<unsigned char> algebraic;  // empty means none
    // preconditioner for the scaled stage matrix; gamma_h = h*gamma
    std::function<LinearMap(double gamma_h, double t, const Vec& y)> make_precond;
};

struct Trajectory {
    Vec times;
    std::vector<Vec> states;
    std::vector<Vec> derivs;  // f at the knots (algebraic rows by finite differences)
    StepperStats stats;

    bool empty() const { return times.empty(); }
    double t0() const { return times.front(); }
    double t1() const { return times.back(); }
    // cubic Hermite interpolation between knots
    void at(double t, Vec& out) const;
    Vec at(double t) const;
};

Trajectory integrate(const ImplicitProblem& problem, const Vec& y0, double t0, double t1,
                     const StepperOptions& opts);

// ---------------------------------------------------------------------------
// Freezing method pieces

struct ReferenceProfile {
    Vec u_hat;
    Vec du_hat;
};

ReferenceProfile make_reference(const Vec& profile, const Grid& grid);

struct FrozenState {
    Vec profile;     // 2n
    double lambda = 0.0;  // instantaneous speed
    double gamma = 0.0;   // accumulated phase
};

// Convenience bundle shared by the integrators below.
struct NfProblem {
    const ModelParams* params;
    const KernelSet* kernels;
    DiffOp diff;
};

Trajectory simulate_cauchy(const Field& initial, double t0, double t1, const ModelParams& p,
                           const KernelSet& K, const StepperOptions& opts = {});

Trajectory simulate_wave_frame(const Field& initial, double c_bar, double t0, double t1,
                               const ModelParams& p, const KernelSet& K,
                               const StepperOptions& opts = {});

// State layout of the DAE trajectory: [v (2n); gamma; lambda], mass diag(I,1,0).
// The initial profile is projected onto the phase constraint and lambda is
// initialized consistently.
Trajectory simulate_freezing_dae(const FrozenState& initial, const ReferenceProfile& ref,
                                 double t0, double t1, const ModelParams& p, const KernelSet& K,
                                 const StepperOptions& opts = {});

// Extracts (v, gamma, lambda) from a freezing-DAE trajectory state.
FrozenState frozen_state_at(const Trajectory& traj, double t, int n_points);

// Phase recovery for a lab-frame trajectory: gamma' =
// -<F(u(t)), du_hat(.-gamma)> / <d u(t), du_hat(.-gamma)>, gamma(0) = 0.
// Returns (times, gamma) sampled at the trajectory knots.
struct PhaseTrace {
    Vec times;
    Vec gamma;
};
PhaseTrace recover_phase(const Trajectory& traj, const ReferenceProfile& ref,
                         const ModelParams& p, const KernelSet& K,
                         const StepperOptions& opts = {});

// P w = w - (<w, du_hat> / <d v_bar, du_hat>) d v_bar   (L2 inner products)
Vec projector_apply(const Vec& w, const WaveState& wave, const ReferenceProfile& ref,
                    const Grid& grid);

// mu(v) = -<du_hat, c d v + F~(v)> / <du_hat, d v_bar + d v>,
// F~(v) = F(v_bar + v) - F(v_bar)
double mu_of_v(const Vec& deviation, const WaveState& wave, const ReferenceProfile& ref,
               const ModelParams& p, const KernelSet& K);

// shifted samples du_hat(x_i - shift), cubic interpolation, zero extension
void shift_samples(const Vec& samples, const Grid& grid, double shift, Vec& out);

}  // namespace nfwave
