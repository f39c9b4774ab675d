#pragma once

// Pseudo-arclength continuation of traveling waves and modulated traveling
// waves, eigenvalue bisection for Fold/Hopf detection, minimally augmented
// two-parameter continuation of Hopf points (complex bordered test function
// with the frequency as an extra unknown), Bogdanov-Takens refinement with
// two bordered rows, Hopf-to-MTW branch switching and the snaking scan.

#include "nfwave/mtw.hpp"

namespace nfwave {

// named access to the continuable scalar model parameters
double get_param(const ModelParams& p, const std::string& name);
void set_param(ModelParams& p, const std::string& name, double value);

struct BifPoint {
    enum class Kind { Fold, Hopf, BT, LimitPointCycles };
    Kind kind = Kind::Fold;
    double p1 = 0.0;             // active parameter
    double p2 = 0.0;             // second parameter (codim-2 context)
    Vec state;                   // problem unknowns at the point
    std::complex<double> critical{0.0, 0.0};
    double omega = 0.0;          // Hopf frequency
    double detection_residual = 0.0;
    bool refined = false;
    std::vector<std::complex<double>> eigvec;
};
const char* to_string(BifPoint::Kind k);

struct BranchPoint {
    Vec state;
    double parameter = 0.0;
    double arclength = 0.0;
    double speed = 0.0;
    double period = 0.0;  // MTW branches
    bool flagged = false;
    Verdict stability = Verdict::Marginal;
    double test_value = 0.0;  // max Re (TW) or max |mu| - 1 (MTW), structural modes excluded
    std::complex<double> critical{0.0, 0.0};
    std::vector<std::complex<double>> critical_vec;
};

struct Branch {
    std::string kind;  // "tw", "mtw-shoot", "mtw-box", "hopf-curve", "fold-curve"
    std::string parameter_name;
    std::vector<BranchPoint> points;
    std::vector<BifPoint> bifurcations;
    std::string termination;
};

struct ContinuationOptions {
    double ds0 = 0.02;
    double ds_min = 1e-6;
    double ds_max = 0.2;
    int max_steps = 400;
    double p_lo = -1e300;
    double p_hi = 1e300;
    int flag_stride = 1;       // stability assessment every k-th point
    int fast_iters = 3;        // corrector iterations considered "fast"
    double grow = 1.2;
    NewtonOptions corrector;   // tol defaults to 1e-9
    double bisect_tol = 1e-6;  // on Re(critical) / (|mu|-1)
    int bisect_max = 60;
    bool detect = true;
};

// generic pseudo-arclength driver over a problem with one active parameter
struct ContinuationProblem {
    int dim_x = 0;
    std::function<void(const Vec&, double, Vec&)> residual;
    std::function<std::function<void(const Vec&, Vec&)>(const Vec&, double)> make_jvp;
    std::function<LinearMap(const Vec&, double)> make_precond;  // may be empty
    std::function<void(const Vec&, double)> on_accept;          // may be empty
    // fills stability data; returns the signed test value
    std::function<double(const Vec&, double, BranchPoint&)> assess;  // may be empty
};

Branch continue_branch(const ContinuationProblem& prob, const Vec& x0, double p0,
                       double initial_direction, const ContinuationOptions& opts);

// TW branch in one model parameter; the reference profile and preconditioner
// speed follow the previously accepted wave.
struct TwBranchConfig {
    std::string parameter;
    ContinuationOptions cont;
    StabilityOptions stability;
};

Branch continue_tw_branch(const WaveState& start, const ModelParams& p0, const KernelSet& K,
                          const TwBranchConfig& cfg, double initial_direction);

// MTW branch (shooting or box) in one model parameter.
struct MtwBranchConfig {
    std::string parameter;
    MtwForm form = MtwForm::ShootOde;
    ContinuationOptions cont;
    MtwSolveOptions solve;
    FloquetOptions floquet;
    bool assess_stability = true;
};

Branch continue_mtw_branch(const MtwOrbit& start, const ModelParams& p0, const KernelSet& K,
                           const MtwBranchConfig& cfg, double initial_direction);

// bisection refinement between two consecutive branch points with opposite
// test sign; works for TW branches (eigenvalue real part)
BifPoint detect_bifurcation(const ContinuationProblem& prob, const Branch& branch,
                            std::size_t left_index, const ContinuationOptions& opts);

// ---------------------------------------------------------------------------
// Codim-1 curves in two parameters

struct Codim1Options {
    std::string param1;  // abscissa (e.g. "theta_i")
    std::string param2;  // ordinate (e.g. "tau")
    ContinuationOptions cont;
    GmresOptions bordered{1e-12, 4000, 120};
    double fd_eps = 1e-7;
};

// Hopf curve: unknowns (v, c, omega, p1, p2), test function from the complex
// bordered system on (A - i omega).
Branch continue_hopf_curve(const BifPoint& hopf, const ModelParams& p0, const KernelSet& K,
                           const Codim1Options& opts, double initial_direction);

// Fold curve: unknowns (v, c, p1, p2), bordered test on the wave Jacobian.
Branch continue_fold_curve(const BifPoint& fold, const ModelParams& p0, const KernelSet& K,
                           const Codim1Options& opts, double initial_direction);

// BT point: omega -> 0 along a Hopf curve; extrapolates (p1, p2) in omega^2
// and refines with the doubly bordered Newton solve.
BifPoint detect_codim2_bt(const Branch& hopf_curve, const ModelParams& p0, const KernelSet& K,
                          const Codim1Options& opts);

// standalone BT refinement from a nearby guess
BifPoint refine_bt(const Vec& wave_state, double p1, double p2, const Vec& null_guess,
                   const ModelParams& p0, const KernelSet& K, const Codim1Options& opts);

// turning point of the codim-1 curve in p1 (parabolic fit around the extremum)
BifPoint codim1_fold_point(const Branch& curve);

// ---------------------------------------------------------------------------
// Branch switching and snaking

struct BranchSwitchOptions {
    MtwForm form = MtwForm::ShootOde;
    int n_slices = 40;
    double amplitude_rel = 1e-2;  // of sup |profile|
    int max_halvings = 4;
    MtwSolveOptions solve;
};

MtwOrbit hopf_branch_switch(const BifPoint& hopf, const ModelParams& p0, const KernelSet& K,
                            const BranchSwitchOptions& opts);

struct SnakingScan {
    std::vector<std::size_t> fold_indices;   // branch indices at parameter turning points
    Vec fold_parameters;
    Vec l1_norms;       // per branch point
    Vec tail_extents;   // per branch point, of the t=0 section
    std::vector<Vec> fold_sections;  // u component at the folds
};

SnakingScan snaking_scan(const Branch& mtw_branch, const ModelParams& p0, const KernelSet& K,
                         const std::string& parameter);

// utility: resample a stacked profile onto another grid (constant extension)
Vec resample_profile(const Vec& profile, const Grid& from, const Grid& to);

}  // namespace nfwave
